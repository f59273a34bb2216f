"""Command-line surface: ``python -m affdim dim|generate|estimate|verify``."""
import argparse
import json
import sys
from typing import List, Optional

from affdim.errors import AffdimError, ConfigError
from affdim.schema import U64_MAX, load_run_config

COMMANDS = ("dim", "generate", "estimate", "verify")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--threads must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affdim",
        description="Affinity dimension and randomly perturbed self-affine attractors.",
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run.")
    parser.add_argument("--config", required=True, help="Path to the run config JSON.")
    parser.add_argument("--out", default=None, help="Output directory (overrides output.dir).")
    parser.add_argument("--seed", type=_u64, default=None, help="Seed overriding the config's seeds.")
    parser.add_argument("--threads", type=_positive, default=None,
                        help="Worker threads (overrides AFFDIM_THREADS).")
    parser.add_argument("--cloud", default=None, help="Cloud CSV to analyse (estimate only).")
    return parser


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run_config, raw = load_run_config(args.config)
        if args.command == "estimate" and not args.cloud:
            raise ConfigError("estimate needs --cloud <path>")
    except AffdimError as err:
        _emit({"command": args.command, "success": False, "error": err.to_dict()})
        return err.exit_code

    # imported late so `--help` and config errors stay fast
    from affdim.orchestrator import AffdimOrchestrator

    orchestrator = AffdimOrchestrator(run_config, raw, out_dir=args.out, threads=args.threads,
                                      seed=args.seed)
    if args.command == "dim":
        code, result = orchestrator.run_dim()
    elif args.command == "generate":
        code, result = orchestrator.run_generate()
    elif args.command == "estimate":
        code, result = orchestrator.run_estimate(args.cloud)
    else:
        code, result = orchestrator.run_verify()

    summary = {"command": args.command, "success": result["success"],
               "report": result["report_path"], "exit_code": code}
    if not result["success"]:
        summary["error"] = result["error"]
    _emit(summary)
    return code

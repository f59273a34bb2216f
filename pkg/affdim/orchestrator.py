"""Orchestrator for affdim - drives the numerical modules for each command."""
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from affdim import __version__, config
from affdim.attractor import ProjectionConfig, cylinder_constant, falconer_weights, generate_cloud
from affdim.dimension import affinity_dimension, pressure_inverse
from affdim.errors import AffdimError, DomainError, InadmissibleDistributionError
from affdim.estimators import (
    ScalePolicy,
    box_count,
    check_energy_exponent,
    covering_sequence,
    energy_estimate,
    occupancy,
    transversality_check,
)
from affdim.ifs import IFSSpec, PressureEvaluator, level_size
from affdim.observability.logger import get_logger, setup_logger
from affdim.observability.tracer import Tracer
from affdim.parallel import resolve_threads
from affdim.randomness import PerturbationField, borel_cantelli_check
from affdim.schema import RunConfig, build_distribution, build_ifs, config_digest, zero_based
from affdim.storage import ReportStore, read_cloud, write_box_curve, write_cloud
from affdim.storage.svg_plot import write_scatter_svg
from affdim.streams import derive_seed

DEFAULT_RHO_GRID = [float(r) for r in np.geomspace(1e-3, 1.0, 8)]


class AffdimOrchestrator:
    """Runs one subcommand against a parsed RunConfig and writes its report."""

    def __init__(
        self,
        run_config: RunConfig,
        config_bytes: bytes,
        out_dir: Optional[str] = None,
        threads: Optional[int] = None,
        seed: Optional[int] = None,
    ):
        """
        Initialize orchestrator.

        Args:
            run_config: Validated run configuration
            config_bytes: Raw config document (its digest goes into reports)
            out_dir: Output directory, overriding ``output.dir``
            threads: Worker threads, overriding AFFDIM_THREADS
            seed: Seed overriding the config's ``seeds`` list
        """
        setup_logger("affdim")
        self.logger = get_logger("affdim.orchestrator")
        self.tracer = Tracer()
        self.config = run_config
        self.threads = resolve_threads(threads)
        self.seeds: List[int] = [seed] if seed is not None else list(run_config.seeds)
        self.out_dir = Path(out_dir or run_config.output.dir)
        self.store = ReportStore(
            str(self.out_dir),
            provenance={
                "schema_version": config.SCHEMA_VERSION,
                "toolkit_version": __version__,
                "config_digest": config_digest(config_bytes),
            },
        )

    @property
    def seed(self) -> int:
        return self.seeds[0]

    def _execute(self, command: str, step: Callable[[], Dict[str, Any]]) -> Tuple[int, Dict[str, Any]]:
        """Run ``step``; errors become machine-readable reports, never exceptions."""
        exit_code = 0
        with self.tracer.trace(command):
            try:
                result = {"success": True, **step()}
            except AffdimError as err:
                level = self.logger.warning if err.exit_code == 2 else self.logger.error
                level(f"{command} failed: [{err.kind}] {err.message}")
                result = {"success": False, "error": err.to_dict()}
                exit_code = err.exit_code
            except Exception as err:
                self.logger.error(f"{command} failed unexpectedly: {err}", exc_info=True)
                result = {"success": False,
                          "error": {"kind": "internal", "message": str(err), "details": {}}}
                exit_code = 1
        path = self.store.save_report(command, result)
        stats = self.tracer.get_operation_stats()
        self.logger.debug(f"timings: {stats}")
        return exit_code, {**result, "report_path": str(path)}

    def _spec(self) -> IFSSpec:
        with self.tracer.trace("validate_ifs"):
            spec = build_ifs(self.config)
        self.logger.info(f"IFS: m={spec.m}, d={spec.dim}, ||T||={spec.norm_T:.6g}")
        return spec

    def _field(self, spec: IFSSpec, seed: Optional[int] = None) -> PerturbationField:
        dist = build_distribution(self.config, spec.dim)
        return PerturbationField(self.seed if seed is None else seed, dist,
                                 self.config.distribution.model)

    def _projection(self) -> ProjectionConfig:
        gen = self.config.generation
        return ProjectionConfig(gen.truncation_tol, gen.max_depth, gen.theta)

    def _evaluator(self, spec: IFSSpec) -> PressureEvaluator:
        solver = self.config.solver
        return PressureEvaluator(spec, cap=solver.enumeration_cap, mc_samples=solver.mc_samples,
                                 seed=derive_seed(self.seed, "pressure"), threads=self.threads)

    def _dimension(self, spec: IFSSpec, evaluator: Optional[PressureEvaluator] = None):
        solver = self.config.solver
        with self.tracer.trace("affinity_dimension"):
            return affinity_dimension(spec, tol=solver.tol, n_max=solver.n_max,
                                      cap=solver.enumeration_cap, evaluator=evaluator or self._evaluator(spec))

    def _dimension_value(self, spec: IFSSpec) -> Tuple[float, str]:
        """Affinity dimension, taken from this directory's dim report when it came from the same config and seed."""
        prior = self.store.load_report("dim")
        if (prior and prior.get("success") and prior.get("seed") == self.seed
                and prior.get("config_digest") == self.store.provenance["config_digest"]):
            self.logger.info(f"reusing affinity dimension {prior['value']} from {self.store.report_path('dim')}")
            return float(prior["value"]), "dim_report"
        return self._dimension(spec).value, "computed"

    # dim

    def run_dim(self) -> Tuple[int, Dict[str, Any]]:
        def step():
            spec = self._spec()
            result = self._dimension(spec)
            self.logger.info(f"affinity dimension {result.value:.6f} in {list(result.bracket)}")
            return {**result.to_dict(), "ifs": spec.to_dict(), "seed": self.seed}

        return self._execute("dim", step)

    # generate

    def run_generate(self) -> Tuple[int, Dict[str, Any]]:
        def step():
            spec = self._spec()
            field = self._field(spec)
            gen = self.config.generation
            measure = None
            if gen.sampler == "word-measure":
                s = gen.measure_s
                if s is None:
                    s = 0.5 * self._dimension_value(spec)[0]
                measure = falconer_weights(spec, s, gen.measure_level, cap=self.config.solver.enumeration_cap,
                                           threads=self.threads)
            with self.tracer.trace("generate_cloud", {"count": gen.count}):
                cloud = generate_cloud(spec, field, self._projection(), gen.count, measure=measure,
                                       seed=derive_seed(self.seed, "words"), threads=self.threads)
            outputs: Dict[str, str] = {}
            formats = self.config.output.formats
            if "csv" in formats:
                csv_path, meta = write_cloud(cloud, self.out_dir / "cloud.csv")
                outputs.update({"csv": csv_path.name, "meta": meta.name})
            plot = None
            if "svg" in formats:
                with self.tracer.trace("write_svg"):
                    plot = write_scatter_svg(cloud, self.out_dir / "cloud.svg")
                outputs["svg"] = "cloud.svg"
            lo, hi = cloud.bounding_box()
            return {
                "count": len(cloud),
                "dim": spec.dim,
                "seed": self.seed,
                "max_truncation_bound": float(cloud.truncation_bounds.max()) if len(cloud) else 0.0,
                "bounding_box": [lo.tolist(), hi.tolist()],
                "generation": cloud.meta["generation"],
                "field": cloud.meta["field"],
                "svg": plot,
                "outputs": outputs,
                "ifs": spec.to_dict(),
            }

        return self._execute("generate", step)

    # estimate

    def run_estimate(self, cloud_path: str) -> Tuple[int, Dict[str, Any]]:
        def step():
            spec = self._spec()
            est = self.config.estimation
            for t in est.t_list:
                check_energy_exponent(t, spec.dim)
            cloud = read_cloud(cloud_path)
            if cloud.dim != spec.dim:
                raise DomainError(f"cloud dimension {cloud.dim} does not match the IFS dimension {spec.dim}")
            policy = ScalePolicy(est.scale_policy.max_doublings, est.scale_policy.min_window,
                                 est.scale_policy.offsets)
            with self.tracer.trace("box_count", {"points": len(cloud)}):
                boxes = box_count(cloud, policy)
            with self.tracer.trace("occupancy"):
                occ = occupancy(cloud)
            if "csv" in self.config.output.formats:
                write_box_curve(boxes.curve(), self.out_dir / "box_curve.csv")
            dimension, source = self._dimension_value(spec)
            report: Dict[str, Any] = {
                "points": len(cloud),
                "box_count": boxes.to_dict(),
                "occupancy": occ.to_dict(),
                "affinity_dimension": dimension,
                "dimension_source": source,
                "gap": abs(boxes.estimate - min(dimension, spec.dim)),
            }
            if est.t_list:
                report["energy"] = self._energies(spec, dimension, est.t_list)
            if est.transversality_pairs:
                report["transversality"] = self._transversality(spec, est.transversality_pairs)
            return report

        return self._execute("estimate", step)

    def _energies(self, spec: IFSSpec, dimension: float, t_list: List[float]) -> List[Dict]:
        est = self.config.estimation
        out = []
        for t in t_list:
            t = check_energy_exponent(t, spec.dim)
            s = t + 0.5 * (dimension - t) if t < dimension else t
            measure = falconer_weights(spec, s, est.energy_level, threads=self.threads)
            with self.tracer.trace("energy_estimate", {"t": t}):
                energy = energy_estimate(spec, self._field(spec), measure, t, est.energy_pairs,
                                         seed=derive_seed(self.seed, "energy", t), threads=self.threads)
            if t >= dimension:
                self.logger.warning(f"t = {t} is not below the dimension {dimension:.4f}; "
                                    "the energy is expected to diverge")
            out.append({**energy.to_dict(), "measure": measure.to_dict(), "below_dimension": t < dimension})
        return out

    def _transversality(self, spec: IFSSpec, pairs) -> List[Dict]:
        est = self.config.estimation
        rhos = est.rho_list or DEFAULT_RHO_GRID
        out = []
        for i, j in pairs:
            with self.tracer.trace("transversality_check"):
                rep = transversality_check(spec, self._field(spec), zero_based(i), zero_based(j), rhos,
                                           est.transversality_seeds,
                                           base_seed=derive_seed(self.seed, "transversality"),
                                           randomize_continuations=est.randomize_continuations,
                                           threads=self.threads)
            out.append(rep.to_dict())
        return out

    # verify

    def run_verify(self) -> Tuple[int, Dict[str, Any]]:
        def step():
            spec = self._spec()
            field = self._field(spec)
            est, ver = self.config.estimation, self.config.verify
            theta = ver.theta if ver.theta is not None else 0.5 * (1.0 + spec.norm_T)
            checks: Dict[str, Any] = {}
            warnings: List[str] = []

            with self.tracer.trace("borel_cantelli_check"):
                tail = borel_cantelli_check(field, spec, theta, range(1, ver.n_max_level + 1),
                                            ver.samples_per_level, seed=derive_seed(self.seed, "tail"),
                                            threads=self.threads)
            tail_report = tail.to_dict()
            warnings.extend(tail.warnings)
            negative_control = not field.dist.tail_admissible
            # the negative control passes when the inadmissibility is detected
            tail_report["passed"] = not tail.admissible if negative_control else tail.series_converges
            checks["borel_cantelli"] = tail_report

            if negative_control:
                if est.transversality_pairs or est.t_list:
                    raise InadmissibleDistributionError(
                        f"{field.dist.kind} cannot drive transversality or energy checks",
                        {"kind": field.dist.kind},
                    )
                for name in ("transversality", "energy", "covering"):
                    checks[name] = {"skipped": "inadmissible distribution (negative control)"}
                return {"checks": checks, "all_passed": tail_report["passed"],
                        "negative_control": True, "warnings": warnings}

            pairs = est.transversality_pairs or self._default_pairs(spec)
            transversality = self._transversality(spec, pairs)
            checks["transversality"] = {"passed": all(r["passed"] for r in transversality),
                                        "pairs": transversality}

            evaluator = self._evaluator(spec)
            dim = self._dimension(spec, evaluator)
            if ver.energy:
                t_list = est.t_list or self._default_t(spec, dim.value)
                energies = self._energies(spec, dim.value, t_list) if t_list else []
                checks["energy"] = {
                    "passed": all(e["within_bound"] for e in energies if e["below_dimension"]),
                    "estimates": energies,
                }
            checks["covering"] = self._covering(spec, dim.value, evaluator)
            all_passed = all(c.get("passed", True) for c in checks.values())
            return {"checks": checks, "all_passed": all_passed, "negative_control": False,
                    "affinity_dimension": dim.value, "warnings": warnings}

        return self._execute("verify", step)

    def _default_pairs(self, spec: IFSSpec) -> List[Tuple[List[int], List[int]]]:
        if spec.m < 2:
            return []
        return [([1], [2]), ([1, 1], [1, 2])]

    def _default_t(self, spec: IFSSpec, dimension: float) -> List[float]:
        t = 0.75 * min(dimension, spec.dim)
        if t <= 0:
            return []
        if float(t).is_integer():
            t += 0.01
        return [round(t, 6)]

    def _covering(self, spec: IFSSpec, dimension: float, evaluator: PressureEvaluator) -> Dict[str, Any]:
        ver = self.config.verify
        if not dimension < spec.dim:
            return {"skipped": "affinity dimension is not below d"}
        thetas = ver.covering_theta or [0.5 * (1.0 + max(spec.norm_T, 0.8))]
        levels = [n for n in range(1, ver.covering_levels + 1)
                  if level_size(spec.m, n) <= self.config.solver.enumeration_cap]
        working = levels[-1]
        sequences = []
        passed = True
        for theta in thetas:
            if not spec.norm_T < theta < 1.0:
                raise DomainError(f"covering theta {theta} must lie in ({spec.norm_T:.6g}, 1)")
            s_k = pressure_inverse(spec, theta ** spec.dim, tol=1e-12, n_max=working,
                                   cap=self.config.solver.enumeration_cap, evaluator=evaluator)
            seq = covering_sequence(spec, theta, s_k, levels, threads=self.threads)
            limit = (4.0 * cylinder_constant(spec)) ** s_k
            ok = seq[-1].value <= 1.05 * limit
            passed = passed and ok
            sequences.append({"theta": theta, "s_k": s_k, "limit": limit, "passed": ok,
                              "sequence": [c.to_dict() for c in seq]})
        return {"passed": passed, "working_level": working, "thetas": sequences}

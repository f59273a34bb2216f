"""Affinity dimension solver and pressure inversion.

root_n(s) = S_n(s)^(1/n) is continuous and decreasing in s. Submultiplicativity
of phi^s makes root_n(s) < 1 at any n a certificate that the limiting pressure
is below 1, so the upper end of every bracket is certified; a finite-n root
above 1 is only evidence, and the lower end is reported as heuristic.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from affdim import config
from affdim.errors import DomainError, InconclusiveError, NoSolutionError
from affdim.ifs import IFSSpec, PressureEvaluator, PressureSum, level_size, validate
from affdim.observability import get_logger

logger = get_logger(__name__)

# root_n within this distance of 1 counts as the upper side
TIE_TOL = 1e-12
MAX_EXTENSIONS = 8


def _skey(s: float) -> str:
    return format(s, ".17g")


@dataclass
class PressureCurve:
    """Every pressure evaluation made while solving."""

    n_levels: List[int] = field(default_factory=list)
    evaluations: Dict[float, List[Tuple[int, float, bool, float]]] = field(default_factory=dict)

    def record(self, ps: PressureSum) -> None:
        if ps.n not in self.n_levels:
            self.n_levels.append(ps.n)
            self.n_levels.sort()
        self.evaluations.setdefault(ps.s, []).append((ps.n, ps.root, ps.exact, ps.stderr))

    @property
    def cert_upper(self) -> Dict[float, float]:
        """min over n of root_n per s, using exact entries when there are any."""
        out = {}
        for s, rows in self.evaluations.items():
            exact = [r for _, r, ex, _ in rows if ex]
            out[s] = min(exact) if exact else min(r for _, r, _, _ in rows)
        return out

    def to_dict(self) -> Dict:
        cert = self.cert_upper
        return {
            "n_levels": list(self.n_levels),
            "evaluations": [
                {
                    "s": s,
                    "cert_upper": cert[s],
                    "levels": [
                        {"n": n, "root": r, "exact": ex, "stderr": se}
                        for n, r, ex, se in rows
                    ],
                }
                for s, rows in sorted(self.evaluations.items())
            ],
        }


@dataclass
class DimensionResult:
    value: float
    bracket: Tuple[float, float]
    n_used: int
    method: str
    certified_upper: bool
    level_gap: Dict[str, float]
    diagnostics: PressureCurve

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "bracket": list(self.bracket),
            "n_used": self.n_used,
            "method": self.method,
            "certified_upper": self.certified_upper,
            "lower_side": "heuristic",
            "level_gap": dict(self.level_gap),
            "diagnostics": self.diagnostics.to_dict(),
        }


def default_level(m: int, n_max: Optional[int], cap: int) -> int:
    """Working level: n_max if given, else the largest n whose level fits the
    spectrum cache (at most DEFAULT_N_MAX)."""
    if n_max is not None:
        if n_max < 1:
            raise DomainError(f"n_max must be >= 1, got {n_max}")
        return int(n_max)
    budget = min(cap, config.SPECTRUM_CACHE_WORDS)
    if m == 1:
        return config.DEFAULT_N_MAX
    n = 1
    while n < config.DEFAULT_N_MAX and level_size(m, n + 1) <= budget:
        n += 1
    return n


def _ensure_valid(spec: IFSSpec) -> IFSSpec:
    return spec if spec.validated else validate(spec)


def _make_evaluator(spec: IFSSpec, evaluator: Optional[PressureEvaluator], cap: int,
                    mc_samples: int, seed: int, threads: Optional[int]) -> PressureEvaluator:
    if evaluator is not None:
        return evaluator
    return PressureEvaluator(spec, cap=cap, mc_samples=mc_samples, seed=seed, threads=threads)


def _is_upper(ps: PressureSum) -> bool:
    return ps.root < 1.0 or abs(ps.root - 1.0) <= TIE_TOL


def affinity_dimension(spec: IFSSpec, tol: float = config.DEFAULT_TOL,
                       n_max: Optional[int] = None,
                       cap: int = config.ENUMERATION_CAP,
                       mc_samples: int = config.DEFAULT_MC_SAMPLES,
                       seed: int = 0, threads: Optional[int] = None,
                       evaluator: Optional[PressureEvaluator] = None) -> DimensionResult:
    """
    Bisect s over [0, 2d] for the crossing root_n(s) = 1.

    Args:
        spec: the IFS (validated on entry if needed)
        tol: bracket width to reach
        n_max: working level; default fits the spectrum cache
        cap: largest level size enumerated exactly
        mc_samples: sampled words per level above the cap
        seed: seed of the Monte Carlo word sample

    Returns:
        DimensionResult with the certified upper end, level gap and every
        evaluation made

    Raises:
        InconclusiveError: a Monte Carlo root is within 2 stderr of 1
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    spec = _ensure_valid(spec)
    n = default_level(spec.m, n_max, cap)
    ev = _make_evaluator(spec, evaluator, cap, mc_samples, seed, threads)
    curve = PressureCurve()
    method = "exact" if ev.is_exact(n) else "monte-carlo"
    logger.info(f"affinity dimension: m={spec.m}, d={spec.dim}, level n={n} ({method})")

    def evaluate(s: float) -> PressureSum:
        ps = ev.at(s, n)
        curve.record(ps)
        if not ps.exact and abs(ps.root - 1.0) <= 2.0 * ps.root_stderr:
            raise InconclusiveError(
                f"root_{n}({s:.6g}) = {ps.root:.6g} is within 2 stderr of 1",
                {"s": s, "n": n, "root": ps.root, "root_stderr": ps.root_stderr,
                 "diagnostics": curve.to_dict()},
            )
        return ps

    lo, hi = 0.0, 2.0 * spec.dim
    top = evaluate(hi)
    extensions = 0
    while not _is_upper(top):
        if extensions >= MAX_EXTENSIONS:
            raise NoSolutionError(f"root_{n} stays above 1 up to s = {hi}", {"s": hi})
        lo, hi = hi, 2.0 * hi
        top = evaluate(hi)
        extensions += 1
    upper = top

    steps = 0
    while hi - lo > tol and steps < config.MAX_BISECTION_STEPS:
        mid = 0.5 * (lo + hi)
        ps = evaluate(mid)
        if _is_upper(ps):
            hi, upper = mid, ps
        else:
            lo = mid
        steps += 1
    logger.debug(f"bisection finished after {steps} steps: [{lo}, {hi}]")

    gap = {"n": float(n), "root_n": upper.root}
    if n >= 2:
        prev = ev.at(hi, n - 1)
        curve.record(prev)
        gap.update({"root_n_minus_1": prev.root, "gap": prev.root - upper.root})
    certified = upper.exact and _is_upper(upper)
    if not certified:
        logger.warning("upper end of the bracket is not certified (Monte Carlo level)")
    return DimensionResult(
        value=0.5 * (lo + hi),
        bracket=(lo, hi),
        n_used=n,
        method=method,
        certified_upper=certified,
        level_gap=gap,
        diagnostics=curve,
    )


def pressure_inverse(spec: IFSSpec, target: float, tol: float = config.DEFAULT_TOL,
                     n_max: Optional[int] = None,
                     cap: int = config.ENUMERATION_CAP,
                     mc_samples: int = config.DEFAULT_MC_SAMPLES,
                     seed: int = 0, threads: Optional[int] = None,
                     evaluator: Optional[PressureEvaluator] = None) -> float:
    """
    The s in [0, 2d] with root_n(s) = target at the working level.

    Bisection runs until the s-bracket is within ``tol`` and the root is
    within ``tol`` of the target, or the bracket reaches machine precision.

    Raises:
        NoSolutionError: target outside (root_n(2d), min(1, root_n(0))]
    """
    spec = _ensure_valid(spec)
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if not target > 0 or target > 1.0:
        raise NoSolutionError(
            f"pressure target must lie in (0, 1], got {target}",
            {"target": target, "achievable": [0.0, 1.0]},
        )
    n = default_level(spec.m, n_max, cap)
    ev = _make_evaluator(spec, evaluator, cap, mc_samples, seed, threads)
    lo, hi = 0.0, 2.0 * spec.dim
    r_lo, r_hi = ev.at(lo, n).root, ev.at(hi, n).root
    if target < r_hi or target > r_lo:
        raise NoSolutionError(
            f"target {target:.6g} is outside the achievable range at level {n}",
            {"target": target, "achievable": [r_hi, min(r_lo, 1.0)], "n": n},
        )
    mid, root = lo, r_lo
    for _ in range(config.MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        root = ev.at(mid, n).root
        if root > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol and abs(root - target) <= tol:
            break
        if hi - lo <= 4 * math.ulp(max(hi, 1.0)):
            break
    return mid


def sk_sequence(spec: IFSSpec, theta_list: Sequence[float], tol: float = config.DEFAULT_TOL,
                n_max: Optional[int] = None,
                cap: int = config.ENUMERATION_CAP,
                mc_samples: int = config.DEFAULT_MC_SAMPLES,
                seed: int = 0, threads: Optional[int] = None) -> List[float]:
    """s_k = pressure_inverse(theta_k^d) for a strictly increasing theta list."""
    spec = _ensure_valid(spec)
    thetas = [float(t) for t in theta_list]
    if not thetas:
        raise DomainError("theta list is empty")
    for prev, cur in zip(thetas, thetas[1:]):
        if not cur > prev:
            raise DomainError("theta list must be strictly increasing", {"theta": thetas})
    for theta in thetas:
        if not (spec.norm_T < theta <= 1.0):
            raise DomainError(
                f"theta {theta} must lie in ({spec.norm_T:.6g}, 1]",
                {"theta": theta, "norm_T": spec.norm_T},
            )
    ev = _make_evaluator(spec, None, cap, mc_samples, seed, threads)
    out = [pressure_inverse(spec, theta ** spec.dim, tol, n_max, evaluator=ev) for theta in thetas]
    for prev, cur in zip(out, out[1:]):
        if cur > prev + tol:
            logger.warning(f"s_k sequence increased from {prev:.6g} to {cur:.6g}")
    return out

"""Empirical dimension estimators and numerical checks of the energy,
transversality and covering bounds."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from affdim import config
from affdim.attractor import (
    InfiniteWord,
    PointCloud,
    ProjectionConfig,
    WordMeasure,
    _series,
    a_priori_depth,
    cylinder_constant,
)
from affdim.errors import (
    DegeneratePairError,
    DomainError,
    InadmissibleDistributionError,
    InsufficientScalesError,
    IntegralExponentError,
)
from affdim.ifs import IFSSpec, _check_enumerable, common_prefix, format_word, map_level_blocks, pressure_sum_exact
from affdim.linalg import SingularSpectrum, check_word, log_spectra, singular_values, svf, svf_from_log, word_product
from affdim.observability import get_logger
from affdim.parallel import chunk_ranges, ordered_map
from affdim.randomness import PerturbationField, perturbations_batch, require_admissible
from affdim.streams import derive_seed, substream

logger = get_logger(__name__)

PointsLike = Union[PointCloud, np.ndarray]


def _points(cloud: PointsLike) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DomainError("estimators need a non-empty (N, d) point set")
    return pts


@dataclass(frozen=True)
class ScalePolicy:
    max_doublings: int = config.BOX_MAX_DOUBLINGS
    min_window: int = config.BOX_MIN_WINDOW
    offsets: int = 1


def _grid_frame(pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """Corner, extent, side length and sample-starvation scale of a cloud."""
    corner = pts.min(axis=0)
    extent = pts.max(axis=0) - corner
    side = float(extent.max())
    if side == 0:
        side = 1.0
    starvation = float(extent.max()) / pts.shape[0] ** (1.0 / pts.shape[1])
    return corner, extent, side, starvation


def count_boxes(pts: np.ndarray, corner: np.ndarray, eps: float, cells: int,
                offset: float = 0.0) -> int:
    """Occupied cells of the grid of side ``eps`` anchored at ``corner - offset``."""
    idx = np.floor((pts - corner + offset) / eps).astype(np.int64)
    idx = np.clip(idx, 0, cells if offset else cells - 1)
    base = cells + 1
    if pts.shape[1] * math.log2(base) < 62:
        keys = np.zeros(idx.shape[0], dtype=np.int64)
        for col in range(idx.shape[1]):
            keys = keys * base + idx[:, col]
        return int(np.unique(keys).size)
    return int(np.unique(idx, axis=0).shape[0])


@dataclass
class BoxCountResult:
    scales: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    r2: float
    window: Tuple[int, int]
    starvation_scale: float

    @property
    def estimate(self) -> float:
        return self.slope

    def curve(self) -> List[Tuple[float, int]]:
        return [(float(e), int(c)) for e, c in zip(self.scales, self.counts)]

    def to_dict(self) -> Dict:
        return {
            "estimate": self.slope,
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "window": list(self.window),
            "starvation_scale": self.starvation_scale,
            "scales": [float(e) for e in self.scales],
            "counts": [int(c) for c in self.counts],
        }


def _fit_window(x: np.ndarray, y: np.ndarray, min_window: int) -> Tuple[float, float, float, Tuple[int, int]]:
    best = None
    for start in range(len(x) - min_window + 1):
        for stop in range(start + min_window, len(x) + 1):
            xs, ys = x[start:stop], y[start:stop]
            if np.ptp(ys) == 0:
                slope, intercept, r2 = 0.0, float(ys[0]), 1.0
            else:
                fit = stats.linregress(xs, ys)
                slope, intercept, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)
            # ties go to the longer window
            if best is None or r2 > best[2] or (r2 == best[2] and stop - start > best[3][1] - best[3][0]):
                best = (slope, intercept, r2, (start, stop))
    return best


def box_count(cloud: PointsLike, policy: Optional[ScalePolicy] = None) -> BoxCountResult:
    """
    Box-counting dimension from dyadic grids anchored at the bounding-box corner.

    Scales run from side/2 down by halving, stopping at side/2^max_doublings
    or the sample-starvation scale side/N^(1/d). The slope of log N against
    log(1/eps) is fitted on the contiguous window of at least ``min_window``
    scales with the largest r^2.

    Raises:
        InsufficientScalesError: fewer usable scales than ``min_window``
    """
    policy = policy or ScalePolicy()
    pts = _points(cloud)
    corner, _, side, starvation = _grid_frame(pts)
    scales, counts = [], []
    for k in range(1, policy.max_doublings + 1):
        eps = side / 2 ** k
        if eps < starvation:
            break
        if policy.offsets > 1:
            count = min(count_boxes(pts, corner, eps, 2 ** k, offset=j * eps / policy.offsets)
                        for j in range(policy.offsets))
        else:
            count = count_boxes(pts, corner, eps, 2 ** k)
        scales.append(eps)
        counts.append(count)
    if len(scales) < policy.min_window:
        raise InsufficientScalesError(
            f"only {len(scales)} scales above the starvation scale {starvation:.3g}; "
            f"need {policy.min_window}",
            {"scales": len(scales), "starvation_scale": starvation},
        )
    scales_arr, counts_arr = np.array(scales), np.array(counts)
    slope, intercept, r2, window = _fit_window(np.log(1.0 / scales_arr), np.log(counts_arr),
                                               policy.min_window)
    return BoxCountResult(scales_arr, counts_arr, slope, intercept, r2, window, starvation)


@dataclass
class OccupancyResult:
    rows: List[Dict]
    starvation_scale: float
    bbox_volume: float
    plateau: bool
    plateau_level: float

    def to_dict(self) -> Dict:
        return {"rows": self.rows, "starvation_scale": self.starvation_scale,
                "bbox_volume": self.bbox_volume, "plateau": self.plateau,
                "plateau_level": self.plateau_level}


def occupancy(cloud: PointsLike, eps_list: Optional[Sequence[float]] = None,
              floor_fraction: float = config.PLATEAU_FLOOR_FRACTION,
              starvation_factor: float = config.STARVATION_FACTOR) -> OccupancyResult:
    """
    Occupied grid volume count * eps^d per scale, and the plateau indicator.

    The plateau holds when the three finest non-starved scales (eps at least
    ``starvation_factor`` times the starvation scale) all keep at least
    ``floor_fraction`` of the bounding-box volume and the finest keeps
    PLATEAU_DECAY_RATIO of the coarsest of the three.
    """
    pts = _points(cloud)
    d = pts.shape[1]
    corner, extent, side, starvation = _grid_frame(pts)
    if eps_list is None:
        eps_list = [side / 2 ** k for k in range(1, config.BOX_MAX_DOUBLINGS + 1)]
    rows = []
    for eps in sorted((float(e) for e in eps_list), reverse=True):
        if not eps > 0:
            raise DomainError(f"occupancy scales must be positive, got {eps}")
        cells = int(math.ceil(side / eps))
        count = count_boxes(pts, corner, eps, max(cells, 1))
        rows.append({
            "eps": eps,
            "count": count,
            "volume": count * eps ** d,
            "starved": bool(eps < starvation_factor * starvation),
        })
    bbox_volume = float(np.prod(extent))
    window = [r["volume"] for r in rows if not r["starved"]][-3:]
    plateau, level = False, 0.0
    if len(window) == 3 and bbox_volume > 0:
        level = min(window)
        plateau = (level >= floor_fraction * bbox_volume and level > 0
                   and window[-1] / window[0] >= config.PLATEAU_DECAY_RATIO)
    return OccupancyResult(rows, starvation, bbox_volume, bool(plateau), float(level))


def check_energy_exponent(t: float, d: int) -> float:
    t = float(t)
    if t.is_integer():
        raise IntegralExponentError(f"energy exponent must be non-integral, got {t}", {"t": t})
    if not 0 < t < d:
        raise DomainError(f"energy exponent must lie in (0, {d}), got {t}", {"t": t})
    return t


def energy_constant_factor(t: float) -> float:
    """1/((k - t)(t + 1 - k)) for k - 1 < t < k."""
    if float(t).is_integer() or t <= 0:
        raise IntegralExponentError(f"energy exponent must be positive and non-integral, got {t}")
    k = math.ceil(t)
    return 1.0 / ((k - t) * (t + 1 - k))


def energy_constant(t: float, transversality_C: float) -> float:
    """c = C t / ((k - t)(t + 1 - k))."""
    return transversality_C * t * energy_constant_factor(t)


def transversality_constant(spec: IFSSpec, projection_bound: float) -> float:
    """C = 2^d K."""
    return 2.0 ** spec.dim * projection_bound


def pair_energy_bound(spec: IFSSpec, i: Sequence[int], j: Sequence[int], t: float,
                      transversality_C: float) -> float:
    """c / phi^t(T_{i ^ j}) for one pair of words."""
    omega = common_prefix(i, j)
    phi = svf(singular_values(word_product(spec.matrices, omega)), t)
    return energy_constant(t, transversality_C) / phi


def layer_cake_energy(distances: np.ndarray, t: float) -> float:
    """t * int_0^inf P(D < rho) rho^(-t-1) d rho for the empirical law of D.

    For sorted distances D_(1) <= ... <= D_(n) the integral is exact on each
    interval: sum_k (k/n) (D_(k)^-t - D_(k+1)^-t), with D_(n+1) = inf.
    """
    dist = np.sort(np.asarray(distances, dtype=float))
    if dist.size == 0:
        return 0.0
    if dist[0] <= 0:
        raise DomainError("layer-cake energy needs positive distances")
    inv = dist ** -t
    upper = np.append(inv[1:], 0.0)
    weights = np.arange(1, dist.size + 1) / dist.size
    return float(np.sum(weights * (inv - upper)))


@dataclass
class EnergyEstimate:
    t: float
    pairs: int
    used_pairs: int
    zero_distance_pairs: int
    mean_inverse_power: float
    stderr: float
    layer_cake: float
    constant_factor: float
    constant_c: float
    transversality_C: float
    bound: float
    bound_converged: bool
    level_sums: List[float]
    running_means: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return self.mean_inverse_power <= self.bound + 3.0 * self.stderr

    def to_dict(self) -> Dict:
        return {
            "t": self.t,
            "pairs": self.pairs,
            "used_pairs": self.used_pairs,
            "zero_distance_pairs": self.zero_distance_pairs,
            "mean_inverse_power": self.mean_inverse_power,
            "stderr": self.stderr,
            "layer_cake": self.layer_cake,
            "constant_factor": self.constant_factor,
            "constant_c": self.constant_c,
            "transversality_C": self.transversality_C,
            "bound": self.bound,
            "bound_converged": self.bound_converged,
            "within_bound": self.within_bound,
            "level_sums": list(self.level_sums),
            "running_means": [list(r) for r in self.running_means],
        }


def energy_level_sums(spec: IFSSpec, measure: WordMeasure, t: float,
                      max_words: int = config.ENERGY_ENUM_WORDS,
                      threads: Optional[int] = None) -> List[float]:
    """A_k = sum over |w| = k of mu([w])^2 / phi^t(T_w), for every enumerable k."""
    sums = [1.0]
    k = 1
    while spec.m ** k <= max_words:
        masses = measure.level_masses(k)
        phi = np.concatenate(map_level_blocks(spec, k, lambda b: svf_from_log(log_spectra(b), t), threads))
        sums.append(math.fsum(masses ** 2 / phi))
        k += 1
        if spec.m == 1 and k > config.DEFAULT_N_MAX:
            break
    return sums


def energy_aggregate(level_sums: Sequence[float], constant_c: float) -> Tuple[float, bool]:
    """c * sum_k A_k, closing the tail with the ratio of the last two levels."""
    total = math.fsum(level_sums)
    if len(level_sums) < 2:
        return math.inf, False
    ratio = level_sums[-1] / level_sums[-2]
    if not ratio < 1.0:
        return math.inf, False
    return constant_c * (total + level_sums[-1] * ratio / (1.0 - ratio)), True


def energy_estimate(spec: IFSSpec, field: PerturbationField, measure: WordMeasure, t: float,
                    pairs: int, seed: int, cfg: Optional[ProjectionConfig] = None,
                    threads: Optional[int] = None) -> EnergyEstimate:
    """
    Monte Carlo t-energy of the projected word measure against its analytic bound.

    Each pair draws two words from ``measure`` with independent uniform
    continuations and a fresh field seed, then averages |x_i - x_j|^-t.
    Exact zero distances are excluded and counted.
    """
    t = check_energy_exponent(t, spec.dim)
    require_admissible(field.dist, "energy estimates")
    K = field.dist.projection_bound
    if not math.isfinite(K):
        raise InadmissibleDistributionError(
            f"{field.dist.kind} has no finite projection-density bound", field.dist.to_dict())
    if pairs < 1:
        raise DomainError(f"energy estimate needs pairs >= 1, got {pairs}")
    cfg = (cfg or ProjectionConfig(truncation_tol=1e-6)).resolved(spec)
    depth = max(a_priori_depth(spec, field, cfg), measure.level + 1)
    table = measure.words()
    m = spec.m

    def words_for(rng, size):
        head = table[measure.sample(rng, size)]
        return np.concatenate([head, rng.integers(0, m, size=(size, depth - measure.level))], axis=1)

    def work(chunk):
        k, start, stop = chunk
        size = stop - start
        rng = substream(seed, "energy-pairs", k)
        wi, wj = words_for(rng, size), words_for(rng, size)
        seeds = [derive_seed(seed, "energy-field", idx) for idx in range(start, stop)]
        xi, _ = _series(spec, wi, perturbations_batch(field, wi, seeds))
        xj, _ = _series(spec, wj, perturbations_batch(field, wj, seeds))
        return np.linalg.norm(xi - xj, axis=1)

    dist = np.concatenate(ordered_map(work, chunk_ranges(pairs), threads))
    nonzero = dist[dist > 0]
    zeros = int(dist.size - nonzero.size)
    if zeros:
        logger.warning(f"{zeros} sampled pairs landed at distance 0 and were excluded")
    values = nonzero ** -t
    mean = float(np.mean(values)) if values.size else 0.0
    stderr = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    running = []
    size = 1
    while size <= values.size:
        running.append((size, float(np.mean(values[:size]))))
        size *= 2

    C = transversality_constant(spec, K)
    c = energy_constant(t, C)
    sums = energy_level_sums(spec, measure, t, threads=threads)
    bound, converged = energy_aggregate(sums, c)
    return EnergyEstimate(
        t=t,
        pairs=pairs,
        used_pairs=int(values.size),
        zero_distance_pairs=zeros,
        mean_inverse_power=mean,
        stderr=stderr,
        layer_cake=layer_cake_energy(nonzero, t),
        constant_factor=energy_constant_factor(t),
        constant_c=c,
        transversality_C=C,
        bound=bound,
        bound_converged=converged,
        level_sums=sums,
        running_means=running,
    )


def transversality_z(spectrum: Union[SingularSpectrum, Sequence[float]], rho: float) -> float:
    """Z(rho) = prod_k min(rho, alpha_k) / alpha_k."""
    if rho < 0:
        raise DomainError(f"rho must be non-negative, got {rho}")
    alphas = spectrum.values if isinstance(spectrum, SingularSpectrum) else tuple(spectrum)
    z = 1.0
    for alpha in alphas:
        z *= min(rho, alpha) / alpha
    return z


@dataclass
class TransversalityCell:
    rho: float
    z: float
    bound: float
    empirical: float
    stderr: float

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + 3.0 * self.stderr


@dataclass
class TransversalityReport:
    i: Tuple[int, ...]
    j: Tuple[int, ...]
    common_prefix: Tuple[int, ...]
    spectrum: Tuple[float, ...]
    C: float
    K: float
    seeds: int
    randomized_continuations: bool
    cells: List[TransversalityCell]

    @property
    def passed(self) -> bool:
        return all(cell.passed for cell in self.cells)

    def to_dict(self) -> Dict:
        return {
            "i": format_word(self.i),
            "j": format_word(self.j),
            "common_prefix": format_word(self.common_prefix),
            "spectrum": list(self.spectrum),
            "C": self.C,
            "K": self.K,
            "seeds": self.seeds,
            "randomized_continuations": self.randomized_continuations,
            "passed": self.passed,
            "cells": [
                {"rho": c.rho, "z": c.z, "bound": c.bound, "empirical": c.empirical,
                 "stderr": c.stderr, "passed": c.passed}
                for c in self.cells
            ],
        }


def transversality_check(spec: IFSSpec, field: PerturbationField, i: Sequence[int],
                         j: Sequence[int], rho_list: Sequence[float], seeds: int,
                         base_seed: int = 0, cfg: Optional[ProjectionConfig] = None,
                         randomize_continuations: bool = False,
                         threads: Optional[int] = None) -> TransversalityReport:
    """
    Collision frequency P(|x_i - x_j| < rho) over field seeds against C Z(rho).

    Continuations past i and j are fixed per run (or drawn per seed when
    ``randomize_continuations``); Z uses the common prefix of the evaluated
    words, and the bound is averaged over seeds when continuations vary.

    Raises:
        DegeneratePairError: i == j
    """
    wi0, wj0 = check_word(i, spec.m), check_word(j, spec.m)
    if wi0 == wj0:
        raise DegeneratePairError(f"transversality needs distinct words, got {format_word(wi0)} twice")
    require_admissible(field.dist, "transversality checks")
    K = field.dist.projection_bound
    if not math.isfinite(K):
        raise InadmissibleDistributionError(
            f"{field.dist.kind} has no finite projection-density bound", field.dist.to_dict())
    if seeds < 1:
        raise DomainError(f"transversality needs seeds >= 1, got {seeds}")
    rhos = [float(r) for r in rho_list]
    cfg = (cfg or ProjectionConfig(truncation_tol=1e-6)).resolved(spec)
    depth = max(a_priori_depth(spec, field, cfg), len(wi0) + 1, len(wj0) + 1)
    C = transversality_constant(spec, K)

    def words(trial: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        tag = trial if randomize_continuations else -1
        ui = InfiniteWord(wi0, spec.m, seed=derive_seed(base_seed, "continuation-i", tag))
        uj = InfiniteWord(wj0, spec.m, seed=derive_seed(base_seed, "continuation-j", tag))
        return ui.symbols(depth), uj.symbols(depth)

    def work(chunk):
        k, start, stop = chunk
        pairs = [words(trial) for trial in range(start, stop)]
        wi = np.array([p[0] for p in pairs], dtype=np.int64)
        wj = np.array([p[1] for p in pairs], dtype=np.int64)
        trial_seeds = [derive_seed(base_seed, "transversality", trial) for trial in range(start, stop)]
        xi, _ = _series(spec, wi, perturbations_batch(field, wi, trial_seeds))
        xj, _ = _series(spec, wj, perturbations_batch(field, wj, trial_seeds))
        zs = []
        for a, b in pairs:
            omega = common_prefix(a, b)
            alphas = singular_values(word_product(spec.matrices, omega)).values
            zs.append([transversality_z(alphas, rho) for rho in rhos])
        return np.linalg.norm(xi - xj, axis=1), np.array(zs).reshape(len(pairs), len(rhos))

    results = ordered_map(work, chunk_ranges(seeds), threads)
    dist = np.concatenate([r[0] for r in results])
    zs = np.concatenate([r[1] for r in results], axis=0)
    fi, fj = words(0)
    omega = common_prefix(fi, fj)
    spectrum = singular_values(word_product(spec.matrices, omega)).values
    cells = []
    for col, rho in enumerate(rhos):
        freq = float(np.mean(dist < rho))
        cells.append(TransversalityCell(
            rho=rho,
            z=float(zs[0, col]) if not randomize_continuations else float(np.mean(zs[:, col])),
            bound=float(C * np.mean(zs[:, col])),
            empirical=freq,
            stderr=math.sqrt(freq * (1.0 - freq) / seeds),
        ))
    return TransversalityReport(wi0, wj0, omega, tuple(spectrum), C, K, seeds,
                                randomize_continuations, cells)


@dataclass
class CoveringSum:
    n: int
    theta: float
    s: float
    C: float
    pressure: float
    value: float
    delta_n: float

    def to_dict(self) -> Dict:
        return {"n": self.n, "theta": self.theta, "s": self.s, "C": self.C,
                "pressure": self.pressure, "value": self.value, "delta_n": self.delta_n}


def covering_sum(spec: IFSSpec, theta_k: float, s_k: float, n: int,
                 eps0: Optional[float] = None, cap: int = config.ENUMERATION_CAP,
                 threads: Optional[int] = None) -> CoveringSum:
    """
    (4C)^s_k theta_k^(-n d) S_n(s_k), the cover-sum bound at level n.

    Also reports the cover mesh delta_n = max_w alpha_r(T_w) 4C / theta_k^n,
    r = ceil(s_k) clipped to [1, d].
    """
    if not spec.norm_T < theta_k <= 1.0:
        raise DomainError(f"theta_k must lie in ({spec.norm_T:.6g}, 1], got {theta_k}")
    _check_enumerable(spec, n, cap)
    C = cylinder_constant(spec, eps0)
    ps = pressure_sum_exact(spec, s_k, n, cap, threads)
    value = (4.0 * C) ** s_k * theta_k ** (-n * spec.dim) * ps.value
    r = min(max(int(math.ceil(s_k)), 1), spec.dim)
    top = max(map_level_blocks(spec, n, lambda b: float(np.max(np.exp(log_spectra(b)[:, r - 1]))), threads))
    return CoveringSum(n=n, theta=theta_k, s=s_k, C=C, pressure=ps.value, value=value,
                       delta_n=top * 4.0 * C / theta_k ** n)


def covering_sequence(spec: IFSSpec, theta_k: float, s_k: float, levels: Sequence[int],
                      eps0: Optional[float] = None, cap: int = config.ENUMERATION_CAP,
                      threads: Optional[int] = None) -> List[CoveringSum]:
    return [covering_sum(spec, theta_k, s_k, n, eps0, cap, threads) for n in levels]

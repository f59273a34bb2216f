"""Perturbed projection of infinite words, point clouds, cylinder diameters
and the level-n word measure.

The projection of i = i_0 i_1 ... is the series

    a_{i_0} + y_{i_0} + sum_{r>=1} T_{i_0..i_{r-1}} (a_{i_r} + y_{i_0..i_r})

evaluated to a finite depth N with a certified bound on the remainder.
Beyond the evaluated prefix the bound assumes |y_w| <= theta^-|w|, inflated
by the largest violation of that cap seen in the evaluated prefix.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from affdim import config
from affdim.errors import (
    DegenerateSystemError,
    DomainError,
    InvalidWordError,
    TruncationNotAchievedError,
)
from affdim.ifs import (
    IFSSpec,
    _check_enumerable,
    format_word,
    index_to_words,
    map_level_blocks,
)
from affdim.linalg import Word, check_word, log_spectra, singular_values, spectra, svf_from_log, word_product
from affdim.observability import get_logger
from affdim.parallel import chunk_ranges, ordered_map
from affdim.randomness import PerturbationField, perturbations_along, perturbations_batch, require_admissible
from affdim.streams import derive_seed, substream

logger = get_logger(__name__)

_CONTINUATION_BLOCK = 64


@dataclass(frozen=True)
class ProjectionConfig:
    truncation_tol: float = config.DEFAULT_TRUNCATION_TOL
    max_depth: Optional[int] = None
    theta: Optional[float] = None

    def resolved(self, spec: IFSSpec) -> "ProjectionConfig":
        """Fill defaults against ``spec`` and check theta > ||T||."""
        if not self.truncation_tol > 0:
            raise DomainError(f"truncation_tol must be positive, got {self.truncation_tol}")
        q = spec.norm_T
        theta = 0.5 * (1.0 + q) if self.theta is None else float(self.theta)
        if not q < theta < 1.0:
            raise DomainError(f"theta must lie in ({q:.6g}, 1), got {theta}",
                              {"theta": theta, "norm_T": q})
        max_depth = self.max_depth
        if max_depth is None:
            max_depth = int(math.ceil(config.MAX_DEPTH_FACTOR * math.log(1.0 / self.truncation_tol)
                                      / math.log(1.0 / q)))
        return ProjectionConfig(self.truncation_tol, max(1, int(max_depth)), theta)

    def to_dict(self) -> Dict:
        return {"truncation_tol": self.truncation_tol, "max_depth": self.max_depth,
                "theta": self.theta}


def tail_bound(spec: IFSSpec, field: PerturbationField, theta: float, depth: int,
               head_norm: float, inflation: float = 1.0) -> float:
    """Bound on the series remainder after ``depth`` terms, given ||T_head||."""
    q = spec.norm_T
    drift = spec.norm_a / (1.0 - q)
    noise = inflation * theta ** (-(depth + 1)) / (1.0 - q / theta)
    if field.dist.degenerate:
        noise = 0.0
    elif math.isfinite(field.dist.support_radius):
        noise = min(noise, field.dist.support_radius / (1.0 - q))
    return head_norm * (drift + noise)


def a_priori_depth(spec: IFSSpec, field: PerturbationField, cfg: ProjectionConfig) -> int:
    """Least N with ||T||^N times the remainder factor below the tolerance."""
    for depth in range(1, cfg.max_depth + 1):
        if tail_bound(spec, field, cfg.theta, depth, spec.norm_T ** depth) <= cfg.truncation_tol:
            return depth
    return cfg.max_depth


@dataclass(frozen=True)
class InfiniteWord:
    """
    A finite prefix followed by a lazily generated continuation.

    With ``seed`` set the continuation is uniform over the m symbols, keyed
    by position after the prefix; otherwise it repeats ``fill``.
    """

    prefix: Word
    m: int
    seed: Optional[int] = None
    fill: int = 0

    def __post_init__(self):
        check_word(self.prefix, self.m)
        check_word((self.fill,), self.m)

    def symbols(self, n: int) -> Word:
        if n <= len(self.prefix):
            return self.prefix[:n]
        extra = n - len(self.prefix)
        if self.seed is None:
            return self.prefix + (self.fill,) * extra
        tail: List[int] = []
        for block in range(-(-extra // _CONTINUATION_BLOCK)):
            rng = substream(self.seed, "continuation", block)
            tail.extend(int(v) for v in rng.integers(0, self.m, _CONTINUATION_BLOCK))
        return self.prefix + tuple(tail[:extra])

    def prepend(self, symbol: int) -> "InfiniteWord":
        return replace(self, prefix=(int(symbol),) + self.prefix)


@dataclass
class ProjectedPoint:
    point: np.ndarray
    truncation_bound: float
    address: Word
    depth: int
    cap_violations: int = 0
    inflation: float = 1.0


def _series(spec: IFSSpec, words: np.ndarray, perts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Partial sums to depth words.shape[1] and the norms of the head products."""
    B, N = words.shape
    d = spec.dim
    product = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    point = np.zeros((B, d))
    for r in range(N):
        sym = words[:, r]
        point += np.einsum("bij,bj->bi", product, spec.translations[sym] + perts[:, r])
        product = np.matmul(product, spec.matrices[sym])
    return point, spectra(product)[:, 0]


def _cap_inflation(perts: np.ndarray, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per row: count of |y_w| > theta^-|w| and max(1, max |y_w| theta^|w|)."""
    N = perts.shape[1]
    caps = theta ** -np.arange(1, N + 1, dtype=float)
    norms = np.linalg.norm(perts, axis=2)
    violations = np.sum(norms > caps, axis=1)
    inflation = np.maximum(1.0, np.max(norms / caps, axis=1, initial=0.0))
    return violations, inflation


def project(spec: IFSSpec, field: PerturbationField, source: Union[InfiniteWord, Sequence[int]],
            cfg: Optional[ProjectionConfig] = None) -> ProjectedPoint:
    """
    Evaluate the perturbed projection of an infinite word.

    Args:
        spec: validated IFS
        field: perturbation field (admissible distribution)
        source: InfiniteWord, or a finite prefix continued with symbol 0
        cfg: truncation tolerance, theta and depth cap

    Returns:
        ProjectedPoint with the certified truncation bound

    Raises:
        TruncationNotAchievedError: max_depth reached with the bound above tol
    """
    require_admissible(field.dist)
    cfg = (cfg or ProjectionConfig()).resolved(spec)
    if not isinstance(source, InfiniteWord):
        source = InfiniteWord(tuple(int(i) for i in source), spec.m)
    depth = a_priori_depth(spec, field, cfg)
    while True:
        word = source.symbols(depth)
        perts = perturbations_along(field, word)[None]
        words = np.asarray(word, dtype=np.int64)[None]
        point, head = _series(spec, words, perts)
        violations, inflation = _cap_inflation(perts, cfg.theta)
        bound = tail_bound(spec, field, cfg.theta, depth, float(head[0]), float(inflation[0]))
        if bound <= cfg.truncation_tol:
            if violations[0]:
                logger.debug(f"{int(violations[0])} cap violations along {format_word(word[:8])}...")
            return ProjectedPoint(point[0], bound, word, depth, int(violations[0]),
                                  float(inflation[0]))
        if depth >= cfg.max_depth:
            raise TruncationNotAchievedError(
                f"truncation bound {bound:.3g} above {cfg.truncation_tol:.3g} at max depth {depth}",
                {"achieved_bound": bound, "depth": depth, "tol": cfg.truncation_tol},
            )
        depth = min(cfg.max_depth, depth + max(4, depth // 4))


@dataclass
class WordMeasure:
    """Probability weights on the m^n words of one level, lexicographic."""

    level: int
    s: float
    m: int
    weights: np.ndarray
    c_prime: float

    def word(self, index: int) -> Word:
        return tuple(int(v) for v in index_to_words(np.array([index]), self.level, self.m)[0])

    def index(self, word: Sequence[int]) -> int:
        idx = 0
        for sym in check_word(word, self.m):
            idx = idx * self.m + sym
        return idx

    def weight(self, word: Sequence[int]) -> float:
        if len(word) != self.level:
            raise InvalidWordError(f"word length {len(word)} != measure level {self.level}")
        return float(self.weights[self.index(word)])

    def words(self) -> np.ndarray:
        return index_to_words(np.arange(self.weights.size), self.level, self.m)

    def level_masses(self, k: int) -> np.ndarray:
        """mu([w]) for every word of length k, lexicographic; uniform past the level."""
        if k <= self.level:
            return self.weights.reshape(self.m ** k, -1).sum(axis=1)
        spread = self.m ** (k - self.level)
        return np.repeat(self.weights, spread) / spread

    def cylinder_mass(self, word: Sequence[int]) -> float:
        w = check_word(word, self.m)
        k = len(w)
        if k <= self.level:
            span = self.m ** (self.level - k)
            start = self.index(w) * span if k else 0
            return float(np.sum(self.weights[start:start + span]))
        return self.weight(w[:self.level]) * self.m ** -(k - self.level)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(size), side="right").clip(0, self.weights.size - 1)

    def to_dict(self) -> Dict:
        return {"level": self.level, "s": self.s, "m": self.m, "c_prime": self.c_prime,
                "words": int(self.weights.size)}


def falconer_weights(spec: IFSSpec, s: float, n: int, dimension: Optional[float] = None,
                     cap: int = config.ENUMERATION_CAP,
                     threads: Optional[int] = None) -> WordMeasure:
    """
    Weights phi^s(T_w)/S_n(s) on the level-n words, with c' = 1/S_n(s).

    Raises:
        DegenerateSystemError: S_n(s) = 0
    """
    _check_enumerable(spec, n, cap)
    if dimension is not None and not s < dimension:
        raise DomainError(f"word-measure exponent {s} must be below the dimension {dimension}")
    phi = np.concatenate(map_level_blocks(spec, n, lambda b: svf_from_log(log_spectra(b), s), threads))
    total = math.fsum(phi)
    if not total > 0:
        raise DegenerateSystemError(f"S_{n}({s}) vanishes", {"n": n, "s": s})
    return WordMeasure(level=n, s=float(s), m=spec.m, weights=phi / total, c_prime=1.0 / total)


@dataclass
class PointCloud:
    """Sampled attractor points with addresses and truncation bounds.

    ``addresses`` is an (N, L) int array padded with -1 past each address.
    """

    points: np.ndarray
    addresses: np.ndarray
    truncation_bounds: np.ndarray
    meta: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def address(self, idx: int) -> Word:
        row = self.addresses[idx]
        return tuple(int(v) for v in row[row >= 0])

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            return np.zeros(self.dim), np.zeros(self.dim)
        return self.points.min(axis=0), self.points.max(axis=0)

    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def in_cylinder(self, word: Sequence[int]) -> np.ndarray:
        """Boolean mask of points whose address starts with ``word``."""
        w = np.asarray(word, dtype=self.addresses.dtype)
        if w.size > self.addresses.shape[1]:
            return np.zeros(len(self), dtype=bool)
        return np.all(self.addresses[:, :w.size] == w, axis=1)


def _pad(rows: List[np.ndarray], width: int) -> np.ndarray:
    out = np.full((len(rows), width), -1, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, :row.size] = row
    return out


def generate_cloud(spec: IFSSpec, field: PerturbationField, cfg: Optional[ProjectionConfig],
                   count: int, measure: Optional[WordMeasure] = None, seed: int = 0,
                   prefix: Sequence[int] = (), threads: Optional[int] = None) -> PointCloud:
    """
    Sample ``count`` points of the perturbed attractor.

    Words are drawn per fixed chunk from keyed substreams: uniformly symbol
    by symbol, or from ``measure`` at its level followed by a uniform
    continuation. ``prefix`` restricts sampling to one cylinder. Points whose
    batched truncation bound misses the tolerance are re-projected deeper.
    """
    if count < 0:
        raise DomainError(f"point count must be non-negative, got {count}")
    require_admissible(field.dist)
    cfg = (cfg or ProjectionConfig()).resolved(spec)
    head = np.asarray(check_word(prefix, spec.m), dtype=np.int64)
    depth = max(a_priori_depth(spec, field, cfg), head.size + 1,
                measure.level + head.size if measure else 0)
    m = spec.m
    table = measure.words() if measure is not None else None

    def work(chunk):
        k, start, stop = chunk
        size = stop - start
        rng = substream(seed, "cloud-words", k)
        parts = [np.broadcast_to(head, (size, head.size))]
        if measure is not None:
            parts.append(table[measure.sample(rng, size)])
        used = sum(p.shape[1] for p in parts)
        parts.append(rng.integers(0, m, size=(size, depth - used)))
        words = np.concatenate(parts, axis=1).astype(np.int64)
        perts = perturbations_batch(field, words)
        points, head_norm = _series(spec, words, perts)
        _, inflation = _cap_inflation(perts, cfg.theta)
        bounds = np.array([tail_bound(spec, field, cfg.theta, depth, h, f)
                           for h, f in zip(head_norm, inflation)])
        rows = [w for w in words]
        for b in np.flatnonzero(bounds > cfg.truncation_tol):
            source = InfiniteWord(tuple(int(v) for v in words[b]), m,
                                  seed=derive_seed(seed, "cloud-continuation", start + int(b)))
            proj = project(spec, field, source, cfg)
            points[b], bounds[b], rows[b] = proj.point, proj.truncation_bound, np.asarray(proj.address)
        return points, bounds, rows

    results = ordered_map(work, chunk_ranges(count), threads)
    d = spec.dim
    if results:
        points = np.concatenate([r[0] for r in results], axis=0)
        bounds = np.concatenate([r[1] for r in results])
        rows = [row for r in results for row in r[2]]
        addresses = _pad(rows, max(row.size for row in rows))
    else:
        points, bounds, addresses = np.zeros((0, d)), np.zeros(0), np.zeros((0, 0), dtype=np.int64)
    meta = {
        "ifs_digest": spec.digest(),
        "dim": d,
        "field": field.to_dict(),
        "generation": {
            "count": int(count),
            "seed": int(seed),
            "sampler": "word-measure" if measure is not None else "uniform",
            "measure": measure.to_dict() if measure is not None else None,
            "prefix": format_word(head),
            "depth": int(depth),
            **cfg.to_dict(),
        },
    }
    logger.info(f"generated {count} points at depth {depth}, "
                f"max truncation bound {float(bounds.max()) if count else 0.0:.3g}")
    return PointCloud(points=points, addresses=addresses, truncation_bounds=bounds, meta=meta)


def cylinder_constant(spec: IFSSpec, eps0: Optional[float] = None) -> float:
    """C = 2 max{2/(q(1 - q/(q+eps0))), 2||a||/(1-q)} with q = ||T||."""
    q = spec.norm_T
    eps0 = config.EPS0_FRACTION * (1.0 - q) if eps0 is None else float(eps0)
    if not 0 < eps0 < 1.0 - q:
        raise DomainError(f"eps0 must lie in (0, {1.0 - q:.6g}), got {eps0}")
    return 2.0 * max(2.0 / (q * (1.0 - q / (q + eps0))), 2.0 * spec.norm_a / (1.0 - q))


def cylinder_diameter_bound(spec: IFSSpec, theta: float, n: int, word: Sequence[int],
                            eps0: Optional[float] = None) -> float:
    """2 alpha_1(T_w) C / theta^n, a diameter bound for the cylinder of ``word``."""
    if len(word) != n:
        raise InvalidWordError(f"word length {len(word)} does not match level {n}")
    q = spec.norm_T
    eps0 = config.EPS0_FRACTION * (1.0 - q) if eps0 is None else float(eps0)
    if not q + eps0 < theta < 1.0:
        raise DomainError(
            f"theta must lie in ({q + eps0:.6g}, 1), got {theta}",
            {"theta": theta, "norm_T": q, "eps0": eps0},
        )
    top = singular_values(word_product(spec.matrices, word)).top
    return 2.0 * top * cylinder_constant(spec, eps0) / theta ** n

"""Perturbation distributions, the word-indexed perturbation field, and the
tail (Borel-Cantelli) check.

The field is random access: the vector attached to a word is computed from a
128-bit BLAKE2b key of (seed, model, word) feeding a counter-based uniform
stream, never from a global sequence.
"""
import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from affdim.errors import DomainError, InadmissibleDistributionError, InvalidWordError
from affdim.ifs import IFSSpec, index_to_words, level_size
from affdim.linalg import Word
from affdim.observability import get_logger
from affdim.parallel import chunk_ranges, ordered_map
from affdim.streams import MASK64, substream, uniforms

logger = get_logger(__name__)

KINDS = ("gaussian", "laplace", "uniform-ball", "student-t")
MODELS = ("full-word-iid", "last-symbol")

_FIELD_PERSON = b"affdim-field-1"
# Rejection sampling of the ball gives up after this many blocks per key
_MAX_REJECTION_BLOCKS = 4096


def ball_volume(dim: int, radius: float = 1.0) -> float:
    """Lebesgue volume of the radius-R ball in R^dim (dim = 0 gives 1)."""
    if dim == 0:
        return 1.0
    log_unit = 0.5 * dim * math.log(math.pi) - special.gammaln(0.5 * dim + 1.0)
    return math.exp(log_unit) * radius ** dim


@dataclass(frozen=True)
class DistributionSpec:
    """
    Noise law for the perturbations, isotropic in R^dim.

    gaussian: N(0, sigma^2 I). laplace: i.i.d. coordinates with scale b.
    uniform-ball: uniform on the radius-R ball (R = 0 is the unperturbed
    system). student-t: multivariate t with nu degrees of freedom and scale,
    kept only as a negative control for the tail condition.
    """

    kind: str
    dim: int
    sigma: float = 1.0
    b: float = 1.0
    radius: float = 1.0
    nu: float = 3.0
    scale: float = 1.0
    projection_override: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}", {"kinds": list(KINDS)})
        if self.dim < 1:
            raise DomainError(f"distribution dimension must be >= 1, got {self.dim}")
        checks = {
            "gaussian": self.sigma > 0,
            "laplace": self.b > 0,
            "uniform-ball": self.radius >= 0,
            "student-t": self.nu > 0 and self.scale > 0,
        }
        if not checks[self.kind]:
            raise DomainError(f"invalid parameters for {self.kind}", self.to_dict())
        if self.projection_override is not None and not self.projection_override > 0:
            raise DomainError("projection bound override must be positive")

    @property
    def tail_admissible(self) -> bool:
        return self.kind != "student-t"

    @property
    def degenerate(self) -> bool:
        return self.kind == "uniform-ball" and self.radius == 0

    @property
    def support_radius(self) -> float:
        return self.radius if self.kind == "uniform-ball" else math.inf

    @property
    def tail_exponent(self) -> float:
        """Polynomial tail exponent; inf for super-polynomial decay."""
        return self.nu if self.kind == "student-t" else math.inf

    def projection_density(self, n: int) -> float:
        """Sup of the density of the first n coordinates (1 <= n <= dim)."""
        d = self.dim
        if not 1 <= n <= d:
            raise DomainError(f"projection rank must be in [1, {d}], got {n}")
        if self.kind == "gaussian":
            return (2.0 * math.pi * self.sigma ** 2) ** (-0.5 * n)
        if self.kind == "laplace":
            # each coordinate density is at most 1/(2b); sqrt(C(d,n)) covers
            # projections onto subspaces that are not coordinate-aligned
            return (2.0 * self.b) ** (-n) * math.sqrt(math.comb(d, n))
        if self.kind == "uniform-ball":
            if self.radius == 0:
                return math.inf
            return ball_volume(d - n, self.radius) / ball_volume(d, self.radius)
        log_c = (special.gammaln(0.5 * (self.nu + n)) - special.gammaln(0.5 * self.nu)
                 - 0.5 * n * math.log(self.nu * math.pi) - n * math.log(self.scale))
        return math.exp(log_c)

    @property
    def density_bound(self) -> float:
        return self.projection_density(self.dim)

    @property
    def projection_bound(self) -> float:
        """K: sup over projection ranks of the projected density bound."""
        if self.projection_override is not None:
            return float(self.projection_override)
        return max(self.projection_density(n) for n in range(1, self.dim + 1))

    def to_dict(self) -> Dict:
        params = {
            "gaussian": {"sigma": self.sigma},
            "laplace": {"b": self.b},
            "uniform-ball": {"radius": self.radius},
            "student-t": {"nu": self.nu, "scale": self.scale},
        }[self.kind]
        return {"kind": self.kind, "dim": self.dim, **params,
                "projection_override": self.projection_override}


def make_distribution(kind: str, dim: int, **params) -> DistributionSpec:
    return DistributionSpec(kind=kind, dim=dim, **params)


def require_admissible(dist: DistributionSpec, purpose: str = "generation") -> None:
    """Reject laws without super-polynomial tails or with infinite K."""
    if not dist.tail_admissible:
        raise InadmissibleDistributionError(
            f"{dist.kind} has polynomial tails and cannot be used for {purpose}",
            {"kind": dist.kind, "tail_exponent": dist.tail_exponent},
        )


def tail_probability_bound(dist: DistributionSpec, t: float) -> float:
    """
    Closed-form upper bound on P(|X| > t).

    gaussian: Gaussian concentration of the norm around sigma sqrt(d).
    laplace: union over coordinates of exp(-t/(b sqrt d)).
    uniform-ball: 0 from the radius on.
    student-t: exact, |X|^2/(d scale^2) is F(d, nu) distributed.
    """
    if not t > 0:
        raise DomainError(f"tail bound needs t > 0, got {t}", {"t": t})
    d = dist.dim
    if dist.kind == "gaussian":
        centre = dist.sigma * math.sqrt(d)
        if t <= centre:
            return 1.0
        return math.exp(-((t - centre) ** 2) / (2.0 * dist.sigma ** 2))
    if dist.kind == "laplace":
        return min(1.0, d * math.exp(-t / (dist.b * math.sqrt(d))))
    if dist.kind == "uniform-ball":
        return 0.0 if t >= dist.radius else 1.0
    return float(stats.f.sf(t * t / (d * dist.scale ** 2), d, dist.nu))


@dataclass(frozen=True)
class TailCertificate:
    dist: DistributionSpec

    @property
    def admissible(self) -> bool:
        return self.dist.tail_admissible

    @property
    def tail_exponent(self) -> float:
        return self.dist.tail_exponent

    def bound(self, t: float) -> float:
        return tail_probability_bound(self.dist, t)

    def moment_profile(self, k: float, grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(t, t^k bound(t)) over a geometric grid."""
        ts = np.geomspace(1.0, 1e8, 400) if grid is None else np.asarray(grid, float)
        return ts, np.array([t ** k * self.bound(t) for t in ts])

    def polynomial_decay_holds(self, k: float, grid: Optional[np.ndarray] = None) -> bool:
        """Numerical check that t^k bound(t) decays along the upper half of the grid."""
        _, profile = self.moment_profile(k, grid)
        half = profile[len(profile) // 2:]
        return bool(half[-1] <= half[0] and half[-1] < profile.max() or profile.max() == 0)

    def to_dict(self) -> Dict:
        return {"kind": self.dist.kind, "admissible": self.admissible,
                "tail_exponent": self.tail_exponent}


@dataclass(frozen=True)
class PerturbationField:
    """
    Deterministic map word -> perturbation vector.

    ``prefix`` shifts the field: the vector for word u is the parent's vector
    for prefix + u.
    """

    seed: int
    dist: DistributionSpec
    model: str = "full-word-iid"
    prefix: Word = ()

    def __post_init__(self):
        if self.model not in MODELS:
            raise DomainError(f"unknown perturbation model {self.model!r}", {"models": list(MODELS)})
        if not 0 <= int(self.seed) <= MASK64:
            raise DomainError(f"field seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def dim(self) -> int:
        return self.dist.dim

    def shifted(self, prefix: Sequence[int]) -> "PerturbationField":
        return PerturbationField(self.seed, self.dist, self.model,
                                 self.prefix + tuple(int(i) for i in prefix))

    def with_seed(self, seed: int) -> "PerturbationField":
        return PerturbationField(seed, self.dist, self.model, self.prefix)

    def to_dict(self) -> Dict:
        return {"seed": self.seed, "model": self.model, "distribution": self.dist.to_dict(),
                "prefix": [i + 1 for i in self.prefix]}


def _base_hasher(seed: int, model: str):
    h = hashlib.blake2b(digest_size=16, person=_FIELD_PERSON)
    h.update(int(seed).to_bytes(8, "little"))
    h.update(b"F" if model == "full-word-iid" else b"L")
    return h


def _symbol_bytes(i: int) -> bytes:
    return int(i).to_bytes(4, "little")


def _prefix_keys(seed: int, model: str, prefix: Word, word: Sequence[int]) -> List[bytes]:
    """Keys of (prefix + word[:r+1]) for r = 0..len(word)-1."""
    if model == "last-symbol":
        base = len(prefix)
        return [_last_symbol_key(seed, base + r + 1, int(sym)) for r, sym in enumerate(word)]
    h = _base_hasher(seed, model)
    for sym in prefix:
        h.update(_symbol_bytes(sym))
    keys = []
    for sym in word:
        h.update(_symbol_bytes(sym))
        keys.append(h.copy().digest())
    return keys


def _last_symbol_key(seed: int, length: int, last: int) -> bytes:
    h = _base_hasher(seed, "last-symbol")
    h.update(int(length).to_bytes(8, "little"))
    h.update(_symbol_bytes(last))
    return h.digest()


def sample_from_keys(dist: DistributionSpec, keys: Sequence[bytes]) -> np.ndarray:
    """One draw of ``dist`` per key, shape (len(keys), dim)."""
    d = dist.dim
    n = len(keys)
    if n == 0 or dist.degenerate:
        return np.zeros((n, d))
    if dist.kind == "gaussian":
        return dist.sigma * special.ndtri(uniforms(keys, d))
    if dist.kind == "laplace":
        u = uniforms(keys, d) - 0.5
        return -dist.b * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    if dist.kind == "student-t":
        u = uniforms(keys, d + 1)
        z = special.ndtri(u[:, :d])
        chi2 = special.chdtri(dist.nu, u[:, d])
        return dist.scale * z / np.sqrt(chi2 / dist.nu)[:, None]
    return _ball_rejection(dist, keys)


def _ball_rejection(dist: DistributionSpec, keys: Sequence[bytes]) -> np.ndarray:
    d = dist.dim
    out = np.zeros((len(keys), d))
    pending = np.arange(len(keys))
    per_block = max(1, 8 // d)
    width = per_block * d if d <= 8 else d
    counter = 0
    while pending.size and counter < _MAX_REJECTION_BLOCKS:
        pending_keys = [keys[i] for i in pending]
        u = uniforms(pending_keys, width, first_counter=counter)
        counter += -(-width // 8)
        accepted = np.zeros(pending.size, dtype=bool)
        for c in range(width // d):
            cand = dist.radius * (2.0 * u[:, c * d:(c + 1) * d] - 1.0)
            ok = (~accepted) & (np.sum(cand ** 2, axis=1) <= dist.radius ** 2)
            out[pending[ok]] = cand[ok]
            accepted |= ok
        pending = pending[~accepted]
    if pending.size:
        raise DomainError(f"ball rejection sampling did not terminate in dimension {d}")
    return out


def _check_word(word: Sequence[int]) -> Word:
    w = tuple(int(i) for i in word)
    if not w:
        raise InvalidWordError("perturbations are attached to non-empty words")
    if min(w) < 0:
        raise InvalidWordError("word symbols must be non-negative")
    return w


def perturbation(field: PerturbationField, word: Sequence[int]) -> np.ndarray:
    """The vector y_w; bit-identical on every call."""
    w = _check_word(word)
    if field.model == "last-symbol":
        key = _last_symbol_key(field.seed, len(field.prefix) + len(w), w[-1])
    else:
        key = _prefix_keys(field.seed, field.model, field.prefix, w)[-1]
    return sample_from_keys(field.dist, [key])[0]


def perturbations_along(field: PerturbationField, word: Sequence[int]) -> np.ndarray:
    """y for every non-empty prefix of ``word``, shape (len(word), dim)."""
    w = _check_word(word)
    return sample_from_keys(field.dist, _prefix_keys(field.seed, field.model, field.prefix, w))


def perturbations_batch(field: PerturbationField, words: np.ndarray,
                        seeds: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Prefix perturbations for a batch of words.

    Args:
        field: distribution, model and default seed
        words: (B, N) symbols
        seeds: optional per-row field seeds overriding ``field.seed``

    Returns:
        (B, N, dim) array; entry [b, r] is y of words[b, :r+1]
    """
    words = np.asarray(words, dtype=np.int64)
    B, N = words.shape
    d = field.dim
    if field.dist.degenerate or B == 0 or N == 0:
        return np.zeros((B, N, d))
    row_seeds = [field.seed] * B if seeds is None else [int(s) for s in seeds]
    if field.model == "last-symbol":
        out = np.empty((B, N, d))
        base = len(field.prefix)
        for seed in sorted(set(row_seeds)):
            rows = np.array([b for b in range(B) if row_seeds[b] == seed])
            symbols = np.unique(words[rows])
            table_keys = [_last_symbol_key(seed, base + r + 1, int(sym))
                          for r in range(N) for sym in symbols]
            table = sample_from_keys(field.dist, table_keys).reshape(N, symbols.size, d)
            pos = np.searchsorted(symbols, words[rows])
            out[rows] = table[np.arange(N)[None, :], pos]
        return out
    keys: List[bytes] = []
    for b in range(B):
        keys.extend(_prefix_keys(row_seeds[b], field.model, field.prefix, words[b]))
    return sample_from_keys(field.dist, keys).reshape(B, N, d)


@dataclass
class BorelCantelliLevel:
    n: int
    threshold: float
    tail_bound: float
    union_bound: float
    words_checked: int
    exceedances: int
    enumerated: bool

    @property
    def empirical_frequency(self) -> float:
        return self.exceedances / self.words_checked if self.words_checked else 0.0


@dataclass
class BorelCantelliReport:
    theta: float
    model: str
    certificate: TailCertificate
    levels: List[BorelCantelliLevel]
    partial_sums: List[float]
    k: int
    ratio: float
    series_converges: bool
    relaxed_admissible: bool
    cauchy_gap: float
    warnings: List[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.certificate.admissible

    def to_dict(self) -> Dict:
        return {
            "theta": self.theta,
            "model": self.model,
            "admissible": self.admissible,
            "relaxed_admissible": self.relaxed_admissible,
            "tail": self.certificate.to_dict(),
            "k": self.k,
            "ratio": self.ratio,
            "series_converges": self.series_converges,
            "cauchy_gap": self.cauchy_gap,
            "partial_sums": list(self.partial_sums),
            "levels": [
                {**asdict(lv), "empirical_frequency": lv.empirical_frequency}
                for lv in self.levels
            ],
            "warnings": list(self.warnings),
        }


def _level_exceedances(field: PerturbationField, spec: IFSSpec, n: int, threshold: float,
                       samples: int, seed: int, threads: Optional[int]) -> Tuple[int, int, bool]:
    m = spec.m
    if field.model == "last-symbol":
        words = np.zeros((m, n), dtype=np.int64)
        words[:, -1] = np.arange(m)
        norms = np.linalg.norm(perturbations_at(field, words), axis=1)
        return m, int(np.sum(norms > threshold)), True
    enumerate_all = level_size(m, n) <= samples
    total = level_size(m, n) if enumerate_all else samples

    def work(chunk):
        k, start, stop = chunk
        if enumerate_all:
            words = index_to_words(np.arange(start, stop), n, m)
        else:
            words = substream(seed, "borel-cantelli", n, k).integers(0, m, size=(stop - start, n))
        norms = np.linalg.norm(perturbations_at(field, words), axis=1)
        return int(np.sum(norms > threshold))

    hits = sum(ordered_map(work, chunk_ranges(total), threads))
    return total, hits, enumerate_all


def perturbations_at(field: PerturbationField, words: np.ndarray) -> np.ndarray:
    """y at the full word only (no prefixes), shape (B, dim)."""
    if field.dist.degenerate:
        return np.zeros((len(words), field.dim))
    if field.model == "last-symbol":
        length = len(field.prefix) + words.shape[1]
        keys = [_last_symbol_key(field.seed, length, int(w[-1])) for w in words]
    else:
        base = _base_hasher(field.seed, field.model)
        for sym in field.prefix:
            base.update(_symbol_bytes(sym))
        keys = []
        for w in words:
            h = base.copy()
            h.update(b"".join(_symbol_bytes(s) for s in w))
            keys.append(h.digest())
    return sample_from_keys(field.dist, keys)


def borel_cantelli_check(field: PerturbationField, spec: IFSSpec, theta: float,
                         n_range: Sequence[int] = range(1, 41),
                         samples_per_level: int = 10000, seed: int = 0,
                         threads: Optional[int] = None) -> BorelCantelliReport:
    """
    Tail events A_n = {some level-n word has |y_w| > theta^-n}.

    Per level: the union bound (m^n words, or m distinct vectors in the
    last-symbol model) times the tail bound, and the empirical exceedance
    count over enumerated or sampled words. The analytic series is judged
    by the ratio m theta^k (super-polynomial tails, theta^k < 1/m) or
    m theta^nu (polynomial tails with exponent nu).

    Raises:
        DomainError: theta outside (||T||, 1)
    """
    if not spec.norm_T < theta < 1.0:
        raise DomainError(
            f"theta must lie in ({spec.norm_T:.6g}, 1), got {theta}",
            {"theta": theta, "norm_T": spec.norm_T},
        )
    cert = TailCertificate(field.dist)
    m = spec.m
    levels: List[BorelCantelliLevel] = []
    partial: List[float] = []
    terms: List[float] = []
    for n in n_range:
        threshold = theta ** (-n)
        tail = cert.bound(threshold)
        multiplicity = float(m) if field.model == "last-symbol" else float(m) ** n
        union = min(1.0, multiplicity * tail)
        checked, hits, enumerated = _level_exceedances(
            field, spec, n, threshold, samples_per_level, seed, threads
        )
        levels.append(BorelCantelliLevel(n, threshold, tail, union, checked, hits, enumerated))
        terms.append(union)
        partial.append(math.fsum(terms))

    k = 1 if m == 1 else int(math.floor(math.log(m) / math.log(1.0 / theta))) + 1
    if field.model == "last-symbol":
        # only m distinct vectors per level: the series is sum_n m P(|y| > theta^-n)
        ratio = theta ** cert.tail_exponent if math.isfinite(cert.tail_exponent) else 0.0
    elif math.isfinite(cert.tail_exponent):
        ratio = m * theta ** cert.tail_exponent
    else:
        ratio = m * theta ** k
    converges = ratio < 1.0
    window = min(10, len(partial) - 1)
    gap = partial[-1] - partial[-1 - window] if window > 0 else (partial[-1] if partial else 0.0)
    warnings: List[str] = []
    if not cert.admissible:
        warnings.append(
            f"negative control: {field.dist.kind} tails decay polynomially "
            f"(exponent {cert.tail_exponent}), the tail condition fails"
        )
        logger.warning(warnings[-1])
    return BorelCantelliReport(
        theta=theta,
        model=field.model,
        certificate=cert,
        levels=levels,
        partial_sums=partial,
        k=k,
        ratio=ratio,
        series_converges=converges,
        relaxed_admissible=cert.admissible or cert.tail_exponent > 0,
        cauchy_gap=gap,
        warnings=warnings,
    )

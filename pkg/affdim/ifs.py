"""Affine IFS specification, words, and level-n pressure sums.

S_n(s) is the sum of phi^s over the m^n products T_w of length-n words. The
exact path enumerates the level in lexicographic blocks (a head product
times every tail product, one batched multiply per block); the Monte Carlo
path averages phi^s over uniform random words drawn from keyed substreams.
"""
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from affdim import config
from affdim.errors import (
    DomainError,
    EnumerationTooLargeError,
    InvalidMatrixError,
    NotContractingError,
    SingularMapError,
)
from affdim.linalg import Word, as_matrix, check_word, log_spectra, spectra, svf_from_log
from affdim.observability import get_logger
from affdim.parallel import chunk_ranges, ordered_map
from affdim.streams import substream

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class IFSSpec:
    """The affine maps f_i(x) = T_i x + a_i, plus validity metadata."""

    matrices: np.ndarray
    translations: np.ndarray
    norm_T: float = math.nan
    norm_a: float = math.nan
    validated: bool = False

    @classmethod
    def from_maps(cls, maps: Sequence[Tuple[Sequence, Sequence[float]]]) -> "IFSSpec":
        """Build an (unvalidated) spec from ``[(matrix, translation), ...]``."""
        if len(maps) == 0:
            raise InvalidMatrixError("an IFS needs at least one map")
        mats = [as_matrix(t) for t, _ in maps]
        dims = {mat.shape[0] for mat in mats}
        if len(dims) != 1:
            raise InvalidMatrixError(f"maps have mixed dimensions {sorted(dims)}")
        d = dims.pop()
        trans = []
        for idx, (_, a) in enumerate(maps):
            vec = np.array(a, dtype=float).reshape(-1)
            if vec.shape != (d,) or not np.all(np.isfinite(vec)):
                raise InvalidMatrixError(
                    f"translation of map {idx + 1} must be {d} finite numbers",
                    {"map": idx + 1},
                )
            trans.append(vec)
        matrices = np.stack(mats)
        translations = np.stack(trans)
        matrices.setflags(write=False)
        translations.setflags(write=False)
        return cls(matrices=matrices, translations=translations)

    @property
    def m(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrices.shape[-1])

    @property
    def falconer_regime(self) -> bool:
        """True when every map has norm below 1/2."""
        return bool(self.norm_T < 0.5)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.matrices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.translations, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> Dict:
        return {
            "dim": self.dim,
            "m": self.m,
            "matrices": self.matrices.tolist(),
            "translations": self.translations.tolist(),
            "norm_T": self.norm_T,
            "norm_a": self.norm_a,
            "falconer_regime": self.falconer_regime,
            "digest": self.digest(),
        }


def validate(spec: IFSSpec) -> IFSSpec:
    """
    Check contraction and invertibility of every map.

    Returns:
        A copy of ``spec`` with norm_T, norm_a filled in and validated = True

    Raises:
        NotContractingError: some ||T_i|| >= 1 (1-based map index in details)
        SingularMapError: some alpha_d(T_i) is zero
    """
    spec_values = spectra(spec.matrices)
    for idx, values in enumerate(spec_values):
        if values[0] >= 1.0:
            raise NotContractingError(
                f"map {idx + 1} has operator norm {values[0]:.6g} >= 1",
                {"map": idx + 1, "norm": float(values[0])},
            )
        if values[-1] <= config.SINGULAR_TOL:
            raise SingularMapError(
                f"map {idx + 1} is singular (smallest singular value {values[-1]:.3g})",
                {"map": idx + 1, "alpha_d": float(values[-1])},
            )
    norm_T = float(np.max(spec_values[:, 0]))
    norm_a = float(np.max(np.linalg.norm(spec.translations, axis=1)))
    return replace(spec, norm_T=norm_T, norm_a=norm_a, validated=True)


def common_prefix(i: Sequence[int], j: Sequence[int]) -> Word:
    """Longest common prefix i ∧ j."""
    out = []
    for a, b in zip(i, j):
        if a != b:
            break
        out.append(int(a))
    return tuple(out)


def format_word(word: Sequence[int]) -> str:
    """Dash-separated 1-based symbols, the form used in every report."""
    return "-".join(str(int(i) + 1) for i in word)


def parse_word(text: str, m: Optional[int] = None) -> Word:
    """Inverse of :func:`format_word`; the empty string is the empty word."""
    text = text.strip()
    if not text:
        return ()
    word = tuple(int(tok) - 1 for tok in text.split("-"))
    return check_word(word, m) if m is not None else word


def index_to_words(indices: np.ndarray, n: int, m: int) -> np.ndarray:
    """Lexicographic indices at level n to an (N, n) array of symbols."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.empty((idx.size, n), dtype=np.int64)
    rest = idx.copy()
    for col in range(n - 1, -1, -1):
        out[:, col] = rest % m
        rest //= m
    return out


@dataclass(frozen=True)
class PressureSum:
    n: int
    s: float
    value: float
    root: float
    exact: bool
    stderr: float = 0.0

    @property
    def root_stderr(self) -> float:
        """Delta-method standard error of the n-th root."""
        if self.exact or self.value <= 0:
            return 0.0
        return self.root * self.stderr / (self.n * self.value)

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "s": self.s,
            "value": self.value,
            "root": self.root,
            "exact": self.exact,
            "stderr": self.stderr,
        }


def _root(value: float, n: int) -> float:
    return value ** (1.0 / n) if value > 0 else 0.0


def level_size(m: int, n: int) -> int:
    return m ** n


def _level_products(matrices: np.ndarray, n: int) -> np.ndarray:
    """All m^n products of length n in lexicographic order, shape (m^n, d, d)."""
    d = matrices.shape[-1]
    products = np.eye(d)[None]
    for _ in range(n):
        products = np.einsum("aij,bjk->abik", products, matrices).reshape(-1, d, d)
    return products


def _split_level(m: int, n: int, block_words: int) -> Tuple[int, int]:
    if m == 1:
        return 0, n
    tail_len = min(n, max(0, int(math.floor(math.log(block_words) / math.log(m)))))
    return n - tail_len, tail_len


def map_level_blocks(spec: IFSSpec, n: int, fn: Callable[[np.ndarray], object],
                     threads: Optional[int] = None,
                     block_words: int = config.TAIL_BLOCK) -> List:
    """
    Apply ``fn`` to every block of level-n products, in lexicographic order.

    Block h holds the products T_head(h) T_tail for every tail word, so
    concatenating the blocks yields the whole level in lexicographic order.
    """
    head_len, tail_len = _split_level(spec.m, n, block_words)
    tails = _level_products(spec.matrices, tail_len)
    heads = _level_products(spec.matrices, head_len)

    def work(h: int):
        return fn(np.matmul(heads[h], tails))

    return ordered_map(work, range(len(heads)), threads)


def _check_enumerable(spec: IFSSpec, n: int, cap: int) -> None:
    if n < 1:
        raise DomainError(f"pressure sums need n >= 1, got {n}", {"n": n})
    words = level_size(spec.m, n)
    if words > cap:
        raise EnumerationTooLargeError(
            f"level {n} has {words} words, above the enumeration cap {cap}; "
            "use the Monte Carlo pressure sum instead",
            {"n": n, "words": words, "cap": cap},
        )


def level_log_spectra(spec: IFSSpec, n: int, cap: int = config.ENUMERATION_CAP,
                      threads: Optional[int] = None) -> np.ndarray:
    """Log-spectra of every level-n product, shape (m^n, d), lexicographic."""
    _check_enumerable(spec, n, cap)
    return np.concatenate(map_level_blocks(spec, n, log_spectra, threads), axis=0)


def pressure_sum_exact(spec: IFSSpec, s: float, n: int,
                       cap: int = config.ENUMERATION_CAP,
                       threads: Optional[int] = None) -> PressureSum:
    """
    S_n(s) by full enumeration of the m^n words.

    Raises:
        EnumerationTooLargeError: m^n above ``cap``
    """
    _check_enumerable(spec, n, cap)
    if s < 0:
        raise DomainError(f"pressure sums need s >= 0, got {s}", {"s": s})
    sums = map_level_blocks(
        spec, n, lambda block: math.fsum(svf_from_log(log_spectra(block), s)), threads
    )
    value = math.fsum(sums)
    return PressureSum(n=n, s=float(s), value=value, root=_root(value, n), exact=True)


def sample_word_block(spec: IFSSpec, n: int, size: int, seed: int, chunk: int,
                      tag: str = "pressure-mc") -> np.ndarray:
    """Uniform random words for one chunk, shape (size, n)."""
    rng = substream(seed, tag, n, chunk)
    return rng.integers(0, spec.m, size=(size, n))


def products_of_words(spec: IFSSpec, words: np.ndarray) -> np.ndarray:
    """Batched products T_w for an (N, n) array of symbols."""
    words = np.asarray(words)
    products = np.broadcast_to(np.eye(spec.dim), (words.shape[0], spec.dim, spec.dim)).copy()
    for col in range(words.shape[1]):
        products = np.matmul(products, spec.matrices[words[:, col]])
    return products


@dataclass
class _Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    low: float = math.inf
    high: float = -math.inf

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        if values.size == 0:
            return cls()
        mean = float(np.mean(values))
        return cls(int(values.size), mean, float(np.sum((values - mean) ** 2)),
                   float(values.min()), float(values.max()))

    def merge(self, other: "_Moments") -> "_Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        return _Moments(total, mean, m2, min(self.low, other.low), max(self.high, other.high))


def _mc_from_moments(moments: _Moments, m: int, n: int, s: float) -> PressureSum:
    scale = float(m) ** n
    if moments.low == moments.high:
        mean, var = moments.low, 0.0
    else:
        mean = moments.mean
        var = moments.m2 / (moments.count - 1) if moments.count > 1 else 0.0
    value = scale * mean
    stderr = scale * math.sqrt(var / moments.count)
    return PressureSum(n=n, s=float(s), value=value, root=_root(value, n), exact=False,
                       stderr=stderr)


def pressure_sum_mc(spec: IFSSpec, s: float, n: int, samples: int, seed: int,
                    threads: Optional[int] = None) -> PressureSum:
    """
    Monte Carlo estimate m^n E[phi^s(T_W)] over uniform words W of length n.

    Sampling is split into fixed chunks, each drawing from its own keyed
    substream, so the estimate does not depend on the thread count.
    """
    if samples < 1:
        raise DomainError(f"Monte Carlo pressure needs samples >= 1, got {samples}")
    if n < 1:
        raise DomainError(f"pressure sums need n >= 1, got {n}", {"n": n})

    def work(chunk):
        k, start, stop = chunk
        words = sample_word_block(spec, n, stop - start, seed, k)
        return _Moments.of(svf_from_log(log_spectra(products_of_words(spec, words)), s))

    moments = _Moments()
    for part in ordered_map(work, chunk_ranges(samples), threads):
        moments = moments.merge(part)
    return _mc_from_moments(moments, spec.m, n, s)


@dataclass
class PressureEvaluator:
    """
    Cached S_n(s) evaluations for root finding in s.

    Levels small enough for the spectrum cache keep their log-spectra, so
    each new s costs one pass of exp; larger enumerable levels stream.
    Levels above the enumeration cap fall back to Monte Carlo on one fixed
    word sample per level (common random numbers keep s -> S_n(s) monotone).
    """

    spec: IFSSpec
    cap: int = config.ENUMERATION_CAP
    mc_samples: int = config.DEFAULT_MC_SAMPLES
    seed: int = 0
    threads: Optional[int] = None
    _cache: Dict[Tuple[int, bool], np.ndarray] = field(default_factory=dict, repr=False)

    def is_exact(self, n: int) -> bool:
        return level_size(self.spec.m, n) <= self.cap

    def _log_spectra(self, n: int) -> Optional[np.ndarray]:
        exact = self.is_exact(n)
        key = (n, exact)
        if key in self._cache:
            return self._cache[key]
        if exact:
            if level_size(self.spec.m, n) > config.SPECTRUM_CACHE_WORDS:
                return None
            logs = level_log_spectra(self.spec, n, self.cap, self.threads)
        else:
            def work(chunk):
                k, start, stop = chunk
                words = sample_word_block(self.spec, n, stop - start, self.seed, k)
                return log_spectra(products_of_words(self.spec, words))

            logs = np.concatenate(
                ordered_map(work, chunk_ranges(self.mc_samples), self.threads), axis=0
            )
            logger.info(f"level {n} exceeds the enumeration cap; "
                        f"using {self.mc_samples} sampled words")
        self._cache[key] = logs
        return logs

    def at(self, s: float, n: int) -> PressureSum:
        logs = self._log_spectra(n)
        if logs is None:
            return pressure_sum_exact(self.spec, s, n, self.cap, self.threads)
        values = svf_from_log(logs, s)
        if self.is_exact(n):
            value = math.fsum(values)
            return PressureSum(n=n, s=float(s), value=value, root=_root(value, n), exact=True)
        moments = _Moments()
        for k, start, stop in chunk_ranges(len(values)):
            moments = moments.merge(_Moments.of(values[start:stop]))
        return _mc_from_moments(moments, self.spec.m, n, s)

"""Small-dimension linear algebra: products along words, singular spectra and
the singular value function phi^s.

Everything here is a pure function of its inputs. Batched variants work on
stacks of matrices shaped (N, d, d) so pressure sums never loop in Python
per word.
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from affdim.errors import DomainError, InvalidMatrixError, InvalidWordError

Word = Tuple[int, ...]


def as_matrix(entries) -> np.ndarray:
    """Coerce row-major entries to a finite square float matrix."""
    try:
        arr = np.array(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrixError(f"matrix entries are not numeric: {exc}")
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidMatrixError(f"matrix must be square, got shape {arr.shape}",
                                 {"shape": list(arr.shape)})
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrixError("matrix has non-finite entries")
    return arr


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values alpha_1 >= ... >= alpha_d >= 0 of one matrix."""

    values: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    @property
    def top(self) -> float:
        return self.values[0]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def spectra(matrices: np.ndarray) -> np.ndarray:
    """Singular values of a stack of square matrices, shape (N, d), decreasing.

    d = 1 and d = 2 use closed forms; larger d uses LAPACK. The smallest
    value is always refined as |det| / (alpha_1 ... alpha_{d-1}) so that long
    products keep relative accuracy in alpha_d.
    """
    mats = np.asarray(matrices, dtype=float)
    d = mats.shape[-1]
    if d == 1:
        return np.abs(mats[..., 0, :])
    if d == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, e = mats[..., 1, 0], mats[..., 1, 1]
        p = np.hypot(a + e, b - c)
        q = np.hypot(a - e, b + c)
        top = 0.5 * (p + q)
        det = np.abs(a * e - b * c)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = np.where(top > 0, det / top, 0.0)
        return np.stack([top, np.minimum(low, top)], axis=-1)

    vals = np.linalg.svd(mats, compute_uv=False)
    det = np.abs(np.linalg.det(mats))
    others = np.prod(vals[..., :-1], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        refined = np.where(others > 0, det / others, vals[..., -1])
    vals[..., -1] = np.minimum(refined, vals[..., -2])
    return vals


def log_spectra(matrices: np.ndarray) -> np.ndarray:
    """Natural log of :func:`spectra`; zero singular values map to -inf."""
    with np.errstate(divide="ignore"):
        return np.log(spectra(matrices))


def singular_values(matrix) -> SingularSpectrum:
    """
    Singular spectrum of one square matrix.

    Args:
        matrix: d x d row-major entries

    Returns:
        SingularSpectrum sorted non-increasing
    """
    arr = as_matrix(matrix)
    return SingularSpectrum(tuple(float(v) for v in spectra(arr[None])[0]))


def svf_from_log(log_values: np.ndarray, s: float) -> np.ndarray:
    """phi^s for a stack of log-spectra shaped (N, d)."""
    s = float(s)
    if s < 0 or math.isnan(s):
        raise DomainError(f"singular value function needs s >= 0, got {s}", {"s": s})
    logs = np.asarray(log_values, dtype=float)
    d = logs.shape[-1]
    if s == 0:
        return np.ones(logs.shape[:-1])
    if s > d:
        return np.exp((s / d) * np.sum(logs, axis=-1))
    r = math.ceil(s)
    head = np.sum(logs[..., :r - 1], axis=-1)
    return np.exp(head + (s - r + 1) * logs[..., r - 1])


def svf(spectrum: Union[SingularSpectrum, Sequence[float]], s: float) -> float:
    """
    Singular value function phi^s.

    For r-1 < s <= r <= d this is alpha_1 ... alpha_{r-1} alpha_r^(s-r+1); for
    s > d it is (alpha_1 ... alpha_d)^(s/d); phi^0 = 1. A zero singular value
    that the formula needs gives 0.

    Args:
        spectrum: singular values, decreasing
        s: exponent, s >= 0

    Returns:
        phi^s as a float
    """
    values = spectrum.as_array() if isinstance(spectrum, SingularSpectrum) else np.asarray(spectrum, float)
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    return float(svf_from_log(logs[None], s)[0])


def check_word(word: Sequence[int], m: int) -> Word:
    """Return ``word`` as a tuple after checking every symbol is below m."""
    out = tuple(int(i) for i in word)
    for i in out:
        if i < 0 or i >= m:
            raise InvalidWordError(f"symbol {i + 1} is not a map index (m = {m})",
                                   {"symbol": i + 1, "m": m})
    return out


def word_product(matrices: Sequence, word: Sequence[int]) -> np.ndarray:
    """
    Left-to-right product T_{i_0} T_{i_1} ... T_{i_{n-1}}.

    Args:
        matrices: the maps' linear parts, shape (m, d, d)
        word: 0-based symbols

    Returns:
        The d x d product; identity for the empty word
    """
    mats = np.asarray(matrices, dtype=float)
    symbols = check_word(word, len(mats))
    product = np.eye(mats.shape[-1])
    for i in symbols:
        product = product @ mats[i]
    return product

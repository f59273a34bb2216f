"""Deterministic keyed random streams.

Every random quantity in affdim is a pure function of a 64-bit seed and a
tag path. A sub-stream is keyed by a 128-bit BLAKE2b digest of both, so any
stream can be rebuilt on its own without replaying the others, whatever the
order or the number of threads that consume them.
"""
import hashlib
import struct
from typing import Any, List, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_PERSON = b"affdim-stream-1"


def _encode(part: Any) -> bytes:
    if isinstance(part, bool):
        return b"b" + bytes([part])
    if isinstance(part, (int, np.integer)):
        return b"i" + int(part).to_bytes(16, "little", signed=True)
    if isinstance(part, (float, np.floating)):
        return b"f" + struct.pack("<d", float(part))
    if isinstance(part, str):
        data = part.encode("utf-8")
        return b"s" + len(data).to_bytes(8, "little") + data
    if isinstance(part, (tuple, list)):
        return b"t" + len(part).to_bytes(8, "little") + b"".join(_encode(p) for p in part)
    raise TypeError(f"cannot key a stream on {type(part).__name__}")


def key128(seed: int, *parts: Any) -> bytes:
    """128-bit key for ``(seed, *parts)``."""
    h = hashlib.blake2b(digest_size=16, person=_PERSON)
    h.update((int(seed) & MASK64).to_bytes(8, "little"))
    for part in parts:
        h.update(_encode(part))
    return h.digest()


def derive_seed(seed: int, *parts: Any) -> int:
    """A child 64-bit seed, e.g. a fresh field seed per Monte Carlo trial."""
    return int.from_bytes(key128(seed, *parts)[:8], "little")


def substream(seed: int, *parts: Any) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *parts)``."""
    key = int.from_bytes(key128(seed, *parts), "little")
    return np.random.Generator(np.random.Philox(key=key))


def uniform_blocks(keys: Sequence[bytes], counter: int) -> np.ndarray:
    """Eight open-interval uniforms per key from block ``counter``.

    Block ``c`` of key ``k`` is BLAKE2b-512(k || c) read as eight 64-bit
    words; the top 53 bits of each become a double in (0, 1).
    """
    suffix = int(counter).to_bytes(8, "little")
    raw = b"".join(hashlib.blake2b(k + suffix, digest_size=64).digest() for k in keys)
    words = np.frombuffer(raw, dtype="<u8").reshape(len(keys), 8)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def uniforms(keys: Sequence[bytes], count: int, first_counter: int = 0) -> np.ndarray:
    """``count`` uniforms per key, drawn from consecutive blocks."""
    blocks: List[np.ndarray] = []
    needed = -(-count // 8)
    for c in range(first_counter, first_counter + needed):
        blocks.append(uniform_blocks(keys, c))
    if not blocks:
        return np.empty((len(keys), 0))
    return np.concatenate(blocks, axis=1)[:, :count]

"""Counter-based deterministic random number generation.

Every random quantity in the pipeline is a pure function of a key built from
semantic coordinates (root seed, a stream label, object id, frame index, ...).
There is no mutable generator state, so results are bitwise reproducible
regardless of evaluation order or parallelism.

The core primitive is the splitmix64 finalizer applied to a 64-bit counter
stream; normals come from Box-Muller over two counter outputs per sample.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(1 << 53)


def _finalize(x: np.ndarray) -> np.ndarray:
    """splitmix64 output function; uint64 array in, uint64 array out."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


def _fold_part(h: np.uint64, part) -> np.uint64:
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        value = np.uint64(int.from_bytes(digest, "little"))
    elif isinstance(part, (int, np.integer)):
        value = np.uint64(int(part) & 0xFFFFFFFFFFFFFFFF)
    else:
        raise TypeError(f"key parts must be int or str, got {type(part).__name__}")
    folded = np.array([h, value], dtype=np.uint64)
    folded += np.array([_GOLDEN, 0], dtype=np.uint64)
    mixed = _finalize(folded)
    return np.uint64(mixed[0] ^ mixed[1])


def key_hash(*parts) -> int:
    """Fold ints and strings into a single 64-bit key, order sensitive."""
    h = np.uint64(0)
    for part in parts:
        h = _fold_part(h, part)
    return int(h)


def _stream(key: int, start: int, count: int) -> np.ndarray:
    """Outputs start..start+count-1 of the counter stream for ``key``."""
    counters = np.arange(start, start + count, dtype=np.uint64)
    return _finalize(np.uint64(key) + (counters + np.uint64(1)) * _GOLDEN)


def uniform_field(shape, *key_parts) -> np.ndarray:
    """I.i.d. uniforms on [0, 1), one per element, keyed by ``key_parts``."""
    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
    key = key_hash(*key_parts)
    bits = _stream(key, 0, size)
    u = (bits >> np.uint64(11)).astype(np.float64) / _U53
    return u.reshape(shape)


def normal_field(shape, *key_parts) -> np.ndarray:
    """I.i.d. standard normals, one per element, keyed by ``key_parts``.

    Element k uses counter slots 2k and 2k+1, so each sample depends only on
    its own flat index and the key: the field is the same no matter how or
    where it is generated.
    """
    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
    key = key_hash(*key_parts)
    bits = _stream(key, 0, 2 * size)
    u1 = (bits[0::2] >> np.uint64(11)).astype(np.float64) / _U53
    u2 = (bits[1::2] >> np.uint64(11)).astype(np.float64) / _U53
    # 1 - u1 lies in (0, 1], keeping the log finite
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    z = radius * np.cos(2.0 * np.pi * u2)
    return z.reshape(shape)


def randint_stream(n_values: int, upper_bounds, *key_parts) -> list[int]:
    """Deterministic integers r_i in [0, upper_bounds[i]); bounds must be >= 1."""
    key = key_hash(*key_parts)
    bits = _stream(key, 0, n_values)
    out = []
    for i, bound in enumerate(upper_bounds):
        if bound < 1:
            raise ValueError("upper bound must be >= 1")
        out.append(int(bits[i] % np.uint64(bound)))
    return out


def sample_without_replacement(n: int, k: int, *key_parts) -> list[int]:
    """Draw k distinct indices from range(n), uniformly, in shuffled order.

    Partial Fisher-Yates driven by the counter stream; k == n yields a full
    permutation. Modulo bias is ~n / 2**64 and irrelevant here.
    """
    if not 0 < k <= n:
        raise ValueError(f"need 0 < k <= n, got k={k}, n={n}")
    pool = list(range(n))
    draws = randint_stream(k, [n - i for i in range(k)], *key_parts)
    for i, r in enumerate(draws):
        j = i + r
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]

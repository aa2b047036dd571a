"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(seed, counter)``, so results do not
depend on iteration order or on how work is split across workers.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# stream tags, occupying the last counter word
STREAM_NOISE = 0
STREAM_DIRECTIONS = 1


def _split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = 10):
    """Vectorised Philox4x32 block function.

    Counter words may be arrays (broadcast together); key words are scalars.
    Returns four ``uint32`` arrays.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(
        *(np.asarray(c, dtype=np.uint64) & _MASK32 for c in (c0, c1, c2, c3))
    )
    c0, c1, c2, c3 = (c.copy() for c in (c0, c1, c2, c3))
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for r in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
        if r + 1 < rounds:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
    return tuple(c.astype(np.uint32) for c in (c0, c1, c2, c3))


def _to_unit(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 53-bit double in [0, 1)
    hi = (a >> np.uint32(5)).astype(np.float64)
    lo = (b >> np.uint32(6)).astype(np.float64)
    return (hi * 67108864.0 + lo) / 9007199254740992.0


def uniform_pair(seed: int, i, j, draw=0, stream: int = STREAM_NOISE):
    """Two independent uniforms in [0, 1) keyed by ``(seed, i, j, draw, stream)``."""
    k0, k1 = _split_seed(seed)
    x0, x1, x2, x3 = philox4x32(j, i, draw, stream, k0, k1)
    return _to_unit(x0, x1), _to_unit(x2, x3)


def uniform(seed: int, i, j, draw=0, stream: int = STREAM_NOISE) -> np.ndarray:
    return uniform_pair(seed, i, j, draw, stream)[0]

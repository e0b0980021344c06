"""Pure-Python counter-based random kernels.

Bit-identical to the compiled ``_ckernels`` module. Every draw is a pure
function of ``(key, index)``, so a schedule can be evaluated lazily, out of
order, or in blocks without changing any value.
"""

from __future__ import annotations

from array import array
from bisect import bisect_right

MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

BACKEND = "python"


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def uniform(key: int, index: int) -> float:
    """Uniform double in [0, 1) for slot ``index`` of stream ``key``."""
    return (mix64((key ^ mix64(index & MASK64)) & MASK64) >> 11) * _INV53


def uniform_block(key: int, start: int, count: int) -> array:
    out = array("d", bytes(8 * count))
    for i in range(count):
        idx = (start + i) & MASK64
        out[i] = (mix64((key ^ mix64(idx)) & MASK64) >> 11) * _INV53
    return out


def draw_modes(key: int, start: int, count: int, cumulative) -> array:
    """Categorical draws over ``count`` consecutive slots.

    ``cumulative`` is the running sum of per-mode probabilities (last entry
    at most 1). Slot ``i`` gets the first mode whose cumulative bound exceeds
    its uniform draw, or -1 when the draw lands past every bound.
    """
    bounds = list(cumulative)
    n = len(bounds)
    out = array("q", bytes(8 * count))
    for i in range(count):
        idx = (start + i) & MASK64
        u = (mix64((key ^ mix64(idx)) & MASK64) >> 11) * _INV53
        m = bisect_right(bounds, u)
        out[i] = m if m < n else -1
    return out

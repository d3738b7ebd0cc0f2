"""Counter-based random streams keyed on (seed, ids..., step).

Every stochastic draw in the simulator is a pure function of its key, so
results do not depend on evaluation order or on how work is split across
threads.  Keys are mixed with the splitmix64 finalizer.
"""

from __future__ import annotations

import numpy as np

# stream tags
FADING = 1
COLLISION = 2
ENAR = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = float(1 << 53)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def keyed_bits(seed: int, *keys) -> np.ndarray:
    """64 random bits per broadcast element of ``keys``."""
    h = _mix(np.asarray([seed], dtype=np.uint64) & np.uint64(0xFFFFFFFFFFFFFFFF))
    for k in keys:
        k = np.asarray(k).astype(np.int64).astype(np.uint64)
        h = _mix(h ^ k)
    return h


def keyed_uniform(seed: int, *keys) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    bits = keyed_bits(seed, *keys)
    return ((bits >> _S11).astype(np.float64) + 0.5) / _TWO53


def keyed_normal(seed: int, *keys) -> np.ndarray:
    """Standard normal draws (Box-Muller on two derived uniforms)."""
    u1 = keyed_uniform(seed, *keys, 0)
    u2 = keyed_uniform(seed, *keys, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class PairStream:
    """Fading stream for one unordered vehicle pair at one control step.

    ``PairStream(seed, a, b, step)`` and ``PairStream(seed, b, a, step)`` yield
    the same draws, which keeps links reciprocal.
    """

    def __init__(self, seed: int, a: int, b: int, step: int):
        self.key = (seed, FADING, min(a, b), max(a, b), step)

    def normal(self, loc: float = 0.0, scale: float = 1.0) -> float:
        seed, *rest = self.key
        return float(loc + scale * keyed_normal(seed, *rest)[0])

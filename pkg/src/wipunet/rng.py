"""Deterministic counter-based random numbers.

Every stream is a pure function of (seed, stream path, counter), built on the
SplitMix64 finalizer. Draws are vectorized over uint64 numpy arrays, which wrap
on overflow with C semantics, so the sequence is bit-identical across platforms
and independent of draw batching only in the sense that the counter advances by
exactly the number of values produced. Substreams derived with split() do not
touch the parent counter, so they are stable no matter how much the parent has
already been consumed.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

_TWO53 = float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over a uint64 array."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix_one(value: int) -> int:
    return int(_mix(np.array([value & _MASK], dtype=np.uint64))[0])


class Rng:
    """Counter-based generator with cheap independent substreams.

    Statelessness is the point: u64 draw i is mix(key + (i+1)*gamma), where the
    key folds together seed and stream id. Reproducing a draw needs only the
    constructor arguments and the index.
    """

    def __init__(self, seed: int, stream: int = 0):
        base = _mix_one((int(seed) + int(_GAMMA)) & _MASK)
        self._key = _mix_one((base ^ ((int(stream) & _MASK) * int(_MIX1) & _MASK)) & _MASK)
        self._counter = 0

    def split(self, stream: int) -> "Rng":
        """Derive an independent substream; does not consume from this one."""
        child = Rng.__new__(Rng)
        child._key = _mix_one((self._key ^ _mix_one(((int(stream) & _MASK) + int(_MIX2)) & _MASK)) & _MASK)
        child._counter = 0
        return child

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit values as a uint64 array."""
        if n < 0:
            raise ValueError("draw count must be non-negative")
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix(np.uint64(self._key) + idx * _GAMMA)

    def uniform(self, shape) -> np.ndarray:
        """Float64 samples in [0, 1) with 53-bit resolution."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        out = (self.u64(n) >> np.uint64(11)).astype(np.float64) / _TWO53
        return out.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Float64 standard normal samples via Box-Muller."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        m = (n + 1) // 2
        bits = self.u64(2 * m)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((bits[:m] >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
        u2 = (bits[m:] >> np.uint64(11)).astype(np.float64) / _TWO53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return out.reshape(shape)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """n int64 samples uniform over [low, high)."""
        if high <= low:
            raise ValueError("empty integer range")
        span = high - low
        vals = (self.uniform((n,)) * span).astype(np.int64)
        return low + np.minimum(vals, span - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return np.argsort(self.u64(n), kind="stable").astype(np.int64)


def _as_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)

"""Deterministic, platform-independent random number generation.

The generator is counter-based splitmix64: draw ``i`` of a stream seeded
with ``s`` is ``mix64(s + (i+1)*GOLDEN)`` where ``mix64`` is the standard
splitmix64 finalizer. This makes every draw a pure function of (seed,
counter), so streams can be vectorized with numpy uint64 arithmetic and
reproduce bit-for-bit on any platform.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def mix64(value: int) -> int:
    """Scalar splitmix64 finalizer, for seed derivation."""
    return int(_mix64(np.uint64(value & _U64_MASK)))


class RngState:
    """Seeded deterministic stream of uniforms, gaussians and integers."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _U64_MASK
        self.counter = int(counter)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed) + idx * _GOLDEN)

    def uniform(self, shape=()) -> np.ndarray:
        """Doubles in [0, 1), 53-bit resolution."""
        n = int(np.prod(shape)) if shape != () else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        return u.reshape(shape) if shape != () else u[0]

    def normal(self, shape=()) -> np.ndarray:
        """Standard gaussians via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape)) if shape != () else 1
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        # shift into (0,1] so log() is safe
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0**-53)
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return out.reshape(shape) if shape != () else out[0]

    def integers(self, low: int, high: int, shape=()):
        """Integers in [low, high). Uses modulo reduction; the bias is
        negligible for the ranges used here and keeps draws one-word."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        n = int(np.prod(shape)) if shape != () else 1
        span = np.uint64(high - low)
        vals = (self._raw(n) % span).astype(np.int64) + low
        return vals.reshape(shape) if shape != () else int(vals[0])

    def fork(self, index: int) -> "RngState":
        """Independent child stream; pure function of (seed, index)."""
        child = mix64((self.seed + (index + 1) * int(_GOLDEN)) & _U64_MASK)
        return RngState(child)

    def __repr__(self):
        return f"RngState(seed={self.seed}, counter={self.counter})"

"""Counter-based deterministic random stream.

All sampling in the toolkit (surface points, subject subsampling) draws from
this stream so results are reproducible from a single integer seed and easy
to port to other languages. The generator is the splitmix64 output function
applied to ``seed + (counter + 1) * GOLDEN``; each counter yields one value,
so any slice of the stream can be generated independently and in parallel.
The exact constants are documented in docs/format.md.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(2.0**-53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Values ``start .. start+count-1`` of the unit-interval stream for ``seed``.

    Returns float64 in [0, 1) with 53 random bits per value.
    """
    counters = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix((np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (counters + np.uint64(1)) * _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * _U53


class CounterRng:
    """Stateful cursor over :func:`uniform_stream` for sequential consumers."""

    def __init__(self, seed: int, start: int = 0):
        self.seed = int(seed)
        self.cursor = int(start)

    def uniform(self, count: int) -> np.ndarray:
        out = uniform_stream(self.seed, self.cursor, count)
        self.cursor += count
        return out

    def normal(self, count: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive stream pairs."""
        u = self.uniform(2 * count).reshape(count, 2)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return r * np.cos(2.0 * np.pi * u[:, 1])

"""Stateless counter-based random streams for reproducible parallel rendering.

Every pixel owns an independent stream keyed by (seed, pixel index); the
n-th draw of a stream is a pure function of (key, n). Patches can therefore
be rendered in any order, or split across workers, without changing a single
sample.
"""

from __future__ import annotations

import numpy as np

# splitmix64 constants
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# Draws reserved per path sample: 8 bounce slots x 8 dims each.
DIMS_PER_BOUNCE = 8
SAMPLE_STRIDE = 64


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; input and output are uint64 arrays."""
    x = (x + _GAMMA) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def mix_u64(*parts: int) -> int:
    """Fold integers into one well-mixed uint64 (seed derivation)."""
    acc = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in parts:
            acc = _mix(acc ^ np.uint64(np.uint64(p) * _GAMMA))
    return int(acc)


def pixel_keys(seed: int, pixel_index: np.ndarray) -> np.ndarray:
    """Per-pixel stream keys from a render seed and linear pixel indices."""
    with np.errstate(over="ignore"):
        return _mix(np.uint64(seed) ^ _mix(pixel_index.astype(np.uint64)))


def uniform(keys: np.ndarray, draw_index: np.ndarray | int) -> np.ndarray:
    """draw_index-th uniform in [0, 1) of each keyed stream."""
    with np.errstate(over="ignore"):
        idx = np.asarray(draw_index, dtype=np.uint64)
        bits = _mix(keys + (idx + np.uint64(1)) * _GAMMA)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

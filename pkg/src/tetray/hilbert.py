"""3-D Hilbert curve keys (Skilling's transpose algorithm).

Used to reorder mesh points and tetrahedra so that data close in space is
close in memory. The mapping is a bijection from the (2^order)^3 grid onto
[0, 2^(3*order)) in which consecutive keys differ by a unit step along one
axis.
"""

from __future__ import annotations

import numpy as np


def hilbert_keys(cells: np.ndarray, order: int) -> np.ndarray:
    """Hilbert keys for an (n, 3) integer array of grid coordinates."""
    cells = np.asarray(cells)
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise ValueError("cells must have shape (n, 3)")
    if order < 1 or order > 20:
        raise ValueError("order must be in 1..20")
    lim = 1 << order
    if cells.min(initial=0) < 0 or cells.max(initial=0) >= lim:
        raise ValueError(f"grid coordinates must be in [0, {lim})")

    x = [cells[:, i].astype(np.uint32).copy() for i in range(3)]

    # Inverse undo of the excess-work pass.
    q = np.uint32(1 << (order - 1))
    while q > 1:
        p = np.uint32(q - 1)
        for i in range(3):
            hi = (x[i] & q) != 0
            x[0] = np.where(hi, x[0] ^ p, x[0])
            t = np.where(hi, np.uint32(0), (x[0] ^ x[i]) & p)
            x[0] ^= t
            x[i] ^= t
        q >>= 1

    # Gray encode.
    x[1] ^= x[0]
    x[2] ^= x[1]
    t = np.zeros_like(x[0])
    q = np.uint32(1 << (order - 1))
    while q > 1:
        hi = (x[2] & q) != 0
        t = np.where(hi, t ^ np.uint32(q - 1), t)
        q >>= 1
    for i in range(3):
        x[i] ^= t

    # Interleave the transposed bits, axis 0 most significant.
    key = np.zeros(len(cells), dtype=np.uint64)
    for b in range(order - 1, -1, -1):
        key <<= np.uint64(3)
        key |= ((x[0] >> b) & 1).astype(np.uint64) << np.uint64(2)
        key |= ((x[1] >> b) & 1).astype(np.uint64) << np.uint64(1)
        key |= ((x[2] >> b) & 1).astype(np.uint64)
    return key


def hilbert_index(cell, order: int) -> int:
    """Hilbert key of one 3-D grid cell."""
    return int(hilbert_keys(np.asarray(cell, dtype=np.int64)[None, :], order)[0])


def quantize(points: np.ndarray, lo, hi, order: int = 10) -> np.ndarray:
    """Map points in the [lo, hi] box onto the 2^order quantization grid."""
    points = np.asarray(points, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    extent = np.where(hi > lo, hi - lo, 1.0)
    cells = ((points - lo) / extent) * ((1 << order) - 1)
    return np.clip(np.floor(cells).astype(np.int64), 0, (1 << order) - 1)

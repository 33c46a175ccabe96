"""Pure NumPy implementations of the hot pixel/geometry kernels.

This is the fallback backend (and the reference the numba backend must match
bit-for-bit).  Selected by setting ``TRAJ_ATLAS_NO_NUMBA=1``.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def rasterize(h: int, w: int, px: np.ndarray, py: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-pixel trajectory crossing counts.

    ``px``/``py`` hold integer pixel coordinates of all polylines back to
    back; ``offsets[i]:offsets[i+1]`` is polyline ``i``.  Consecutive vertex
    pairs are rasterized with a DDA stepped along the major axis; each
    polyline increments a crossed pixel at most once.  Out-of-grid pixels are
    ignored.
    """
    counts = np.zeros((h, w), dtype=np.int64)
    for ti in range(len(offsets) - 1):
        a, b = int(offsets[ti]), int(offsets[ti + 1])
        if b - a < 2:
            continue
        flat_chunks = []
        for si in range(a, b - 1):
            x0, y0 = px[si], py[si]
            x1, y1 = px[si + 1], py[si + 1]
            steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
            if steps > 1:
                fr = np.arange(steps, dtype=np.float64) / (steps - 1)
            else:
                fr = np.zeros(1, dtype=np.float64)
            xi = np.floor(x0 + (x1 - x0) * fr + 0.5).astype(np.int64)
            yi = np.floor(y0 + (y1 - y0) * fr + 0.5).astype(np.int64)
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            flat_chunks.append(yi[ok] * w + xi[ok])
        if not flat_chunks:
            continue
        flat = np.unique(np.concatenate(flat_chunks))
        counts.reshape(-1)[flat] += 1
    return counts


def _sliding(pad: np.ndarray, size: int, axis: int, op) -> np.ndarray:
    n = pad.shape[axis] - size + 1
    out = pad.take(range(0, n), axis=axis).copy()
    for k in range(1, size):
        op(out, pad.take(range(k, k + n), axis=axis), out=out)
    return out


def erode(img: np.ndarray, radius: int) -> np.ndarray:
    """Grayscale erosion with a ``(2r+1)`` square window, zero outside the grid."""
    size = 2 * radius + 1
    pad = np.pad(img.astype(np.float64), radius, constant_values=0.0)
    tmp = _sliding(pad, size, axis=1, op=np.minimum)
    return _sliding(tmp, size, axis=0, op=np.minimum)


def dilate(img: np.ndarray, radius: int) -> np.ndarray:
    """Grayscale dilation with a ``(2r+1)`` square window, zero outside the grid."""
    size = 2 * radius + 1
    pad = np.pad(img.astype(np.float64), radius, constant_values=0.0)
    tmp = _sliding(pad, size, axis=1, op=np.maximum)
    return _sliding(tmp, size, axis=0, op=np.maximum)


def _zs_subpass(a: np.ndarray, step: int) -> int:
    c = a[1:-1, 1:-1]
    p2 = a[:-2, 1:-1]
    p3 = a[:-2, 2:]
    p4 = a[1:-1, 2:]
    p5 = a[2:, 2:]
    p6 = a[2:, 1:-1]
    p7 = a[2:, :-2]
    p8 = a[1:-1, :-2]
    p9 = a[:-2, :-2]
    ring = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
    b = sum(p.astype(np.int16) for p in ring[:-1])
    trans = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.int16) for i in range(8))
    if step == 0:
        d1 = p2 * p4 * p6
        d2 = p4 * p6 * p8
    else:
        d1 = p2 * p4 * p8
        d2 = p2 * p6 * p8
    kill = (c == 1) & (b >= 2) & (b <= 6) & (trans == 1) & (d1 == 0) & (d2 == 0)
    c[kill] = 0
    return int(kill.sum())


def thin(img: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning to a fixpoint; input and output are {0,1} uint8."""
    a = np.pad(img.astype(np.uint8), 1, constant_values=0)
    while True:
        changed = _zs_subpass(a, 0)
        changed += _zs_subpass(a, 1)
        if changed == 0:
            break
    return a[1:-1, 1:-1].copy()


def segments_dist_sq(
    px: np.ndarray,
    py: np.ndarray,
    ax: np.ndarray,
    ay: np.ndarray,
    bx: np.ndarray,
    by: np.ndarray,
) -> np.ndarray:
    """Squared distance of every point to every segment, shape (P, S)."""
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    safe = np.where(l2 > 0.0, l2, 1.0)
    wx = px[:, None] - ax[None, :]
    wy = py[:, None] - ay[None, :]
    t = (wx * dx[None, :] + wy * dy[None, :]) / safe[None, :]
    t = np.where(l2[None, :] > 0.0, t, 0.0)
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    ex = wx - t * dx[None, :]
    ey = wy - t * dy[None, :]
    return ex * ex + ey * ey

"""Numba-compiled kernels, bit-compatible with :mod:`.numpy_backend`.

Every function keeps the exact arithmetic of the NumPy reference (same
operation order, plain IEEE semantics, no fastmath) so the two backends are
interchangeable in golden tests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def rasterize(h, w, px, py, offsets):
    counts = np.zeros((h, w), dtype=np.int64)
    visited = np.full((h, w), -1, dtype=np.int64)
    for ti in range(len(offsets) - 1):
        a = offsets[ti]
        b = offsets[ti + 1]
        if b - a < 2:
            continue
        for si in range(a, b - 1):
            x0 = px[si]
            y0 = py[si]
            x1 = px[si + 1]
            y1 = py[si + 1]
            steps = max(abs(x1 - x0), abs(y1 - y0)) + 1
            for k in range(steps):
                fr = k / (steps - 1) if steps > 1 else 0.0
                xi = int(np.floor(x0 + (x1 - x0) * fr + 0.5))
                yi = int(np.floor(y0 + (y1 - y0) * fr + 0.5))
                if 0 <= xi < w and 0 <= yi < h and visited[yi, xi] != ti:
                    visited[yi, xi] = ti
                    counts[yi, xi] += 1
    return counts


@njit(cache=True)
def _window_pass(pad, size, vertical, take_min):
    if vertical:
        h = pad.shape[0] - size + 1
        w = pad.shape[1]
    else:
        h = pad.shape[0]
        w = pad.shape[1] - size + 1
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            best = pad[y, x]
            for k in range(1, size):
                v = pad[y + k, x] if vertical else pad[y, x + k]
                if take_min:
                    if v < best:
                        best = v
                else:
                    if v > best:
                        best = v
            out[y, x] = best
    return out


@njit(cache=True)
def _morph(img, radius, take_min):
    size = 2 * radius + 1
    h, w = img.shape
    pad = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.float64)
    pad[radius : radius + h, radius : radius + w] = img
    tmp = _window_pass(pad, size, False, take_min)
    return _window_pass(tmp, size, True, take_min)


def erode(img, radius):
    return _morph(img.astype(np.float64), radius, True)


def dilate(img, radius):
    return _morph(img.astype(np.float64), radius, False)


@njit(cache=True)
def _thin_impl(a):
    h, w = a.shape
    kill_y = np.empty(h * w, dtype=np.int64)
    kill_x = np.empty(h * w, dtype=np.int64)
    while True:
        total = 0
        for step in range(2):
            n_kill = 0
            for y in range(1, h - 1):
                for x in range(1, w - 1):
                    if a[y, x] != 1:
                        continue
                    p2 = a[y - 1, x]
                    p3 = a[y - 1, x + 1]
                    p4 = a[y, x + 1]
                    p5 = a[y + 1, x + 1]
                    p6 = a[y + 1, x]
                    p7 = a[y + 1, x - 1]
                    p8 = a[y, x - 1]
                    p9 = a[y - 1, x - 1]
                    b = int(p2) + int(p3) + int(p4) + int(p5) + int(p6) + int(p7) + int(p8) + int(p9)
                    if b < 2 or b > 6:
                        continue
                    trans = 0
                    if p2 == 0 and p3 == 1:
                        trans += 1
                    if p3 == 0 and p4 == 1:
                        trans += 1
                    if p4 == 0 and p5 == 1:
                        trans += 1
                    if p5 == 0 and p6 == 1:
                        trans += 1
                    if p6 == 0 and p7 == 1:
                        trans += 1
                    if p7 == 0 and p8 == 1:
                        trans += 1
                    if p8 == 0 and p9 == 1:
                        trans += 1
                    if p9 == 0 and p2 == 1:
                        trans += 1
                    if trans != 1:
                        continue
                    if step == 0:
                        if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                            continue
                    else:
                        if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                            continue
                    kill_y[n_kill] = y
                    kill_x[n_kill] = x
                    n_kill += 1
            for i in range(n_kill):
                a[kill_y[i], kill_x[i]] = 0
            total += n_kill
        if total == 0:
            return a


def thin(img):
    a = np.pad(img.astype(np.uint8), 1, constant_values=0)
    return _thin_impl(a)[1:-1, 1:-1].copy()


@njit(cache=True)
def segments_dist_sq(px, py, ax, ay, bx, by):
    n_p = len(px)
    n_s = len(ax)
    out = np.empty((n_p, n_s), dtype=np.float64)
    for j in range(n_s):
        dx = bx[j] - ax[j]
        dy = by[j] - ay[j]
        l2 = dx * dx + dy * dy
        for i in range(n_p):
            wx = px[i] - ax[j]
            wy = py[i] - ay[j]
            if l2 > 0.0:
                t = (wx * dx + wy * dy) / l2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            ex = wx - t * dx
            ey = wy - t * dy
            out[i, j] = ex * ex + ey * ey
    return out

"""Raster stage: trajectory density image, denoising, binarization, thinning.

World registration is an affine pixel-center mapping: pixel ``(col, row)``
sits at ``(origin_x + col * resolution, origin_y + row * resolution)``.
Arrays are indexed ``[row, col]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from traj_atlas import kernels
from traj_atlas.core import Trajectory, ValidationError

log = logging.getLogger(__name__)

MorphPass = tuple[str, int]  # ("open" | "close", radius_px)


@dataclass(frozen=True)
class RasterGrid:
    """World-registered grayscale image of per-pixel trajectory counts."""

    origin_x: float
    origin_y: float
    resolution: float
    values: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValidationError(f"resolution must be > 0, got {self.resolution}")
        v = np.asarray(self.values)
        if v.ndim != 2 or v.size == 0:
            raise ValidationError("grid values must be a non-empty 2-D array")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def world_to_pixel(self, x, y):
        """Nearest pixel (col, row) for world coordinates."""
        col = np.floor((np.asarray(x) - self.origin_x) / self.resolution + 0.5).astype(np.int64)
        row = np.floor((np.asarray(y) - self.origin_y) / self.resolution + 0.5).astype(np.int64)
        return col, row

    def pixel_to_world(self, col, row):
        """World coordinates of pixel centers."""
        x = self.origin_x + np.asarray(col, dtype=np.float64) * self.resolution
        y = self.origin_y + np.asarray(row, dtype=np.float64) * self.resolution
        return x, y

    def with_values(self, values: np.ndarray) -> "RasterGrid":
        return RasterGrid(self.origin_x, self.origin_y, self.resolution, values)


@dataclass(frozen=True)
class BinaryImage(RasterGrid):
    """Grid whose values are a {0,1} foreground mask."""


@dataclass(frozen=True)
class Skeleton(BinaryImage):
    """Binary image whose foreground is one pixel wide."""


def grid_bounds_for(trajs: Sequence[Trajectory], resolution: float, margin_m: float = 2.0):
    """Origin and (width, height) covering all trajectory points plus a margin."""
    xs = np.concatenate([t.x for t in trajs]) if trajs else np.zeros(1)
    ys = np.concatenate([t.y for t in trajs]) if trajs else np.zeros(1)
    ox = float(xs.min() - margin_m)
    oy = float(ys.min() - margin_m)
    w = int(np.ceil((xs.max() + margin_m - ox) / resolution)) + 1
    h = int(np.ceil((ys.max() + margin_m - oy) / resolution)) + 1
    return ox, oy, w, h


def rasterize(
    trajs: Sequence[Trajectory],
    resolution: float,
    origin: tuple[float, float] | None = None,
    size: tuple[int, int] | None = None,
    margin_m: float = 2.0,
) -> RasterGrid:
    """Count, per pixel, how many trajectories cross it.

    Crossings are determined by line-rasterizing consecutive point pairs;
    each trajectory contributes at most 1 to any pixel.  With ``origin`` or
    ``size`` omitted the grid is fitted to the data.  Out-of-grid points are
    skipped and their count logged.
    """
    if resolution <= 0:
        raise ValidationError(f"resolution must be > 0, got {resolution}")
    if origin is None or size is None:
        if not trajs:
            return RasterGrid(0.0, 0.0, resolution, np.zeros((1, 1), dtype=np.int64))
        ox, oy, w, h = grid_bounds_for(trajs, resolution, margin_m)
        if origin is not None:
            ox, oy = origin
        if size is not None:
            w, h = size
    else:
        (ox, oy), (w, h) = origin, size
    if not trajs:
        return RasterGrid(ox, oy, resolution, np.zeros((h, w), dtype=np.int64))

    grid = RasterGrid(ox, oy, resolution, np.zeros((h, w), dtype=np.int64))
    px_parts, py_parts, offsets = [], [], [0]
    oob = 0
    total = 0
    for traj in trajs:
        col, row = grid.world_to_pixel(traj.x, traj.y)
        inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
        oob += int((~inside).sum())
        total += len(col)
        px_parts.append(col)
        py_parts.append(row)
        offsets.append(offsets[-1] + len(col))
    if oob:
        log.warning("rasterize: %d of %d points fall outside the grid and are skipped", oob, total)
    counts = kernels.rasterize(
        h,
        w,
        np.concatenate(px_parts),
        np.concatenate(py_parts),
        np.asarray(offsets, dtype=np.int64),
    )
    return grid.with_values(counts)


def morphological_denoise(grid: RasterGrid, passes: Iterable[MorphPass]) -> RasterGrid:
    """Apply grayscale opening/closing passes with square structuring elements."""
    values = grid.values.astype(np.float64)
    for op, radius in passes:
        radius = int(radius)
        if radius < 1:
            raise ValidationError(f"morphology radius must be >= 1, got {radius}")
        if op == "open":
            values = kernels.dilate(kernels.erode(values, radius), radius)
        elif op == "close":
            values = kernels.erode(kernels.dilate(values, radius), radius)
        else:
            raise ValidationError(f"unknown morphology op {op!r}")
    return grid.with_values(values)


def binarize(grid: RasterGrid, threshold: float) -> BinaryImage:
    """Foreground wherever the density count reaches the threshold."""
    if threshold < 1:
        raise ValidationError(f"threshold must be >= 1, got {threshold}")
    mask = (grid.values >= threshold).astype(np.uint8)
    return BinaryImage(grid.origin_x, grid.origin_y, grid.resolution, mask)


def thin(img: BinaryImage) -> Skeleton:
    """Reduce foreground to one-pixel-wide lines (two-subiteration thinning)."""
    out = kernels.thin(img.values.astype(np.uint8))
    return Skeleton(img.origin_x, img.origin_y, img.resolution, out)


def neighbor_counts(mask: np.ndarray) -> np.ndarray:
    """Number of foreground 8-neighbours per pixel."""
    a = np.pad(mask.astype(np.int16), 1, constant_values=0)
    out = (
        a[:-2, :-2] + a[:-2, 1:-1] + a[:-2, 2:]
        + a[1:-1, :-2] + a[1:-1, 2:]
        + a[2:, :-2] + a[2:, 1:-1] + a[2:, 2:]
    )
    return out


_NBHD = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _adjacent(a, b) -> bool:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def prune_spurs(skel: Skeleton, max_spur_px: int) -> Skeleton:
    """Delete endpoint-to-junction branches of at most ``max_spur_px`` pixels.

    A branch is walked from its endpoint through chain pixels; it ends (and
    is deleted, attachment pixel included) where the walk meets several
    continuations that do not form a single corner clump, i.e. where the
    main structure begins.  Repeats until stable, so nested spurs fall too.
    Bare lines (endpoint to endpoint) are never removed.
    """
    mask = skel.values.astype(np.uint8).copy()
    h, w = mask.shape

    def candidates(cur, prev):
        out = []
        for dy, dx in _NBHD:
            ny, nx = cur[0] + dy, cur[1] + dx
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] == 1 and (ny, nx) != prev:
                out.append((ny, nx))
        return out

    while True:
        counts = neighbor_counts(mask)
        endpoints = np.argwhere((mask == 1) & (counts == 1))
        removed_any = False
        for row, col in endpoints:
            if mask[row, col] == 0:  # consumed by an earlier deletion this sweep
                continue
            path = [(int(row), int(col))]
            prev = None
            cur = path[0]
            while len(path) <= max_spur_px:
                nxts = candidates(cur, prev)
                if not nxts:  # other endpoint or isolated stub: keep
                    break
                if len(nxts) >= 2:
                    clump = all(
                        _adjacent(a, b) for i, a in enumerate(nxts) for b in nxts[i + 1 :]
                    )
                    if not clump:
                        # several distinct continuations: the branch ends here
                        for py, px in path:
                            mask[py, px] = 0
                        removed_any = True
                        break
                    # corner clump: step through its orthogonal member
                    nxts.sort(key=lambda p: (abs(p[0] - cur[0]) + abs(p[1] - cur[1]), p))
                prev, cur = cur, nxts[0]
                path.append(cur)
        if not removed_any:
            break
    return Skeleton(skel.origin_x, skel.origin_y, skel.resolution, mask)


def write_pgm(grid: RasterGrid, path) -> None:
    """Plain-text PGM dump for visual inspection and golden tests."""
    vals = np.asarray(np.round(grid.values), dtype=np.int64)
    maxval = max(int(vals.max()), 1)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{grid.width} {grid.height}\n{maxval}\n")
        for row in vals:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_pbm(img: BinaryImage, path) -> None:
    """Plain-text PBM dump (1 = foreground)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P1\n{img.width} {img.height}\n")
        for row in img.values:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")

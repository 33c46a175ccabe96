"""Trajectory types, CSV ingestion, kinematics derivation and split/trim.

A trajectory is a strictly time-ordered sequence of 2-D world positions.
Speeds and headings are derived quantities (forward differences) and are
populated by :func:`derive_kinematics`; everything downstream assumes they
are present.  All types are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

CSV_HEADER = "trajectory_id,t_s,x_m,y_m"


class TrajAtlasError(Exception):
    """Base class for errors raised by this package."""


class ParseError(TrajAtlasError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(TrajAtlasError):
    """Input violates a documented precondition."""


class TrajectoryPoint(NamedTuple):
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class VehicleState:
    """Planar kinematic state: position, heading, speed, yaw rate, acceleration."""

    x: float
    y: float
    heading: float
    speed: float
    yaw_rate: float = 0.0
    acceleration: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.heading, self.speed, self.yaw_rate, self.acceleration)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite vehicle state: {vals}")
        if self.speed < 0:
            raise ValidationError(f"negative speed: {self.speed}")


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered 2-D point sequence with optional derived speed/heading.

    Arrays are read-only; derived arrays are either both present or both
    None.  ``t`` is strictly increasing.
    """

    id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray | None = None
    heading: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if not (len(t) == len(x) == len(y)):
            raise ValidationError(f"trajectory {self.id!r}: mismatched array lengths")
        if len(t) < 2:
            raise ValidationError(f"trajectory {self.id!r}: needs at least 2 points")
        if not (np.isfinite(t).all() and np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValidationError(f"trajectory {self.id!r}: non-finite values")
        if not (np.diff(t) > 0).all():
            raise ValidationError(f"trajectory {self.id!r}: timestamps not strictly increasing")
        for name, arr in (("t", t), ("x", x), ("y", y)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for name in ("speed", "heading"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.float64)
                if len(arr) != len(t):
                    raise ValidationError(f"trajectory {self.id!r}: bad {name} length")
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(*p) for p in zip(self.t, self.x, self.y)]

    @property
    def xy(self) -> np.ndarray:
        """(n, 2) position array."""
        return np.column_stack([self.x, self.y])

    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc length per point, starting at 0."""
        d = np.hypot(np.diff(self.x), np.diff(self.y))
        return np.concatenate([[0.0], np.cumsum(d)])

    def length_m(self) -> float:
        return float(self.arc_lengths()[-1])

    def slice(self, start: int, stop: int, new_id: str | None = None) -> "Trajectory":
        sl = slice(start, stop)
        return Trajectory(
            id=new_id if new_id is not None else self.id,
            t=self.t[sl].copy(),
            x=self.x[sl].copy(),
            y=self.y[sl].copy(),
            speed=None if self.speed is None else self.speed[sl].copy(),
            heading=None if self.heading is None else self.heading[sl].copy(),
        )


def load_trajectories(path) -> list[Trajectory]:
    """Read a trajectory CSV (header ``trajectory_id,t_s,x_m,y_m``).

    Rows of different trajectories may interleave, but within one id the
    timestamps must be strictly increasing in file order; a violation
    (including duplicate ``(id, t)`` rows) raises :class:`ValidationError`
    naming the id.  Malformed rows raise :class:`ParseError` with the line
    number.  Returns trajectories in order of first appearance.
    """
    order: list[str] = []
    rows: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != CSV_HEADER:
            raise ParseError(f"expected header {CSV_HEADER!r}, got {header!r}", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", line=lineno)
            tid = parts[0]
            try:
                t, x, y = float(parts[1]), float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
                raise ParseError("non-finite value", line=lineno)
            bucket = rows.get(tid)
            if bucket is None:
                rows[tid] = [(t, x, y)]
                order.append(tid)
            else:
                if t <= bucket[-1][0]:
                    raise ValidationError(
                        f"trajectory {tid!r}: non-monotone timestamp {t} after {bucket[-1][0]}"
                    )
                bucket.append((t, x, y))
    out = []
    for tid in order:
        pts = rows[tid]
        if len(pts) < 2:
            raise ValidationError(f"trajectory {tid!r}: needs at least 2 points")
        arr = np.array(pts, dtype=np.float64)
        out.append(Trajectory(id=tid, t=arr[:, 0], x=arr[:, 1], y=arr[:, 2]))
    return out


def save_trajectories(trajs: Iterable[Trajectory], path) -> None:
    """Write trajectories in the CSV format read by :func:`load_trajectories`.

    Floats are written with ``repr`` so a save/load round trip is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for traj in trajs:
            for t, x, y in zip(traj.t, traj.x, traj.y):
                fh.write(f"{traj.id},{float(t)!r},{float(x)!r},{float(y)!r}\n")


def derive_kinematics(traj: Trajectory) -> Trajectory:
    """Populate per-point speed and heading from forward differences.

    ``speed[i] = |p[i+1] - p[i]| / (t[i+1] - t[i])``; the last point copies
    the penultimate values.  A zero-displacement step keeps the previous
    heading (0 if there is none yet) so headings are always defined.
    """
    dt = np.diff(traj.t)
    if (dt <= 0).any():
        raise ValidationError(f"trajectory {traj.id!r}: non-positive time step")
    dx = np.diff(traj.x)
    dy = np.diff(traj.y)
    dist = np.hypot(dx, dy)
    speed = np.empty(len(traj), dtype=np.float64)
    speed[:-1] = dist / dt
    speed[-1] = speed[-2]
    heading = np.empty(len(traj), dtype=np.float64)
    prev = 0.0
    for i in range(len(traj) - 1):
        if dist[i] > 0.0:
            prev = math.atan2(dy[i], dx[i])
        heading[i] = prev
    heading[-1] = heading[-2]
    return Trajectory(traj.id, traj.t, traj.x, traj.y, speed=speed, heading=heading)


def split_and_trim(
    traj: Trajectory, min_length_m: float, max_gap_s: float = 1.0
) -> list[Trajectory]:
    """Split at temporal gaps > ``max_gap_s`` and drop short leftovers.

    Segments shorter than ``min_length_m`` of arc length (or fewer than two
    points) are discarded.  When no split happens the trajectory is returned
    unchanged; otherwise segment ids get a ``#k`` suffix.
    """
    if min_length_m <= 0:
        raise ValidationError(f"min_length_m must be > 0, got {min_length_m}")
    gaps = np.nonzero(np.diff(traj.t) > max_gap_s)[0]
    bounds = [0] + [int(g) + 1 for g in gaps] + [len(traj)]
    single = len(bounds) == 2
    out = []
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        if b - a < 2:
            continue
        seg = traj.slice(a, b, new_id=traj.id if single else f"{traj.id}#{k}")
        if seg.length_m() >= min_length_m:
            out.append(seg)
    return out


def mean_speed_over_window(traj: Trajectory, window_s: float) -> float:
    """Mean derived speed over the trailing ``window_s`` seconds."""
    if traj.speed is None:
        raise ValidationError("trajectory has no derived speeds")
    mask = traj.t >= traj.t[-1] - window_s
    return float(traj.speed[mask].mean())


def resample_at_times(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    """Positions linearly interpolated at the given timestamps, shape (m, 2).

    Timestamps outside the trajectory's range clamp to its endpoints.
    """
    times = np.asarray(times, dtype=np.float64)
    xs = np.interp(times, traj.t, traj.x)
    ys = np.interp(times, traj.t, traj.y)
    return np.column_stack([xs, ys])


def truncate_at_arc_length(traj: Trajectory, max_arc_m: float) -> Trajectory:
    """Cut the trajectory at the given cumulative arc length.

    The crossing point is linearly interpolated so the result's length is
    exactly ``max_arc_m`` (unless the trajectory is shorter, in which case it
    is returned unchanged).
    """
    s = traj.arc_lengths()
    if max_arc_m >= s[-1]:
        return traj
    k = int(np.searchsorted(s, max_arc_m, side="right"))
    k = max(k, 1)
    seg = s[k] - s[k - 1]
    frac = 0.0 if seg == 0 else (max_arc_m - s[k - 1]) / seg
    t_cut = traj.t[k - 1] + frac * (traj.t[k] - traj.t[k - 1])
    x_cut = traj.x[k - 1] + frac * (traj.x[k] - traj.x[k - 1])
    y_cut = traj.y[k - 1] + frac * (traj.y[k] - traj.y[k - 1])
    t = np.concatenate([traj.t[:k], [t_cut]])
    x = np.concatenate([traj.x[:k], [x_cut]])
    y = np.concatenate([traj.y[:k], [y_cut]])
    if t[-1] <= t[-2]:  # cut collapsed onto an existing sample
        t, x, y = t[:-1], x[:-1], y[:-1]
    def cut_derived(arr):
        if arr is None:
            return None
        return np.concatenate([arr[: len(t) - 1], [arr[min(k, len(traj) - 1)]]])

    return Trajectory(traj.id, t, x, y, speed=cut_derived(traj.speed), heading=cut_derived(traj.heading))

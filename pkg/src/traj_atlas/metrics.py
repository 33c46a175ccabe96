"""Trajectory similarity measures and their weighted combination.

Two complementary distance notions: time-aligned mean Euclidean distance
(``medt``) and path-only nearest-point distance (``medp``), plus the
auxiliary global orientation and average velocity differences.  The default
combination weighs the two distance terms equally and ignores the auxiliary
terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from traj_atlas import kernels
from traj_atlas.core import Trajectory, ValidationError

DEFAULT_WEIGHTS = {"medt": 0.5, "medp": 0.5, "god": 0.0, "avd": 0.0}


@dataclass(frozen=True)
class SimilarityBreakdown:
    medt: float
    medp: float
    god: float
    avd: float
    combined: float
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))


def medt(pred: Trajectory, gt: Trajectory) -> float:
    """Mean distance from predicted points to the ground truth at equal times.

    Only predicted points inside the ground-truth time range participate;
    disjoint time ranges are an error.
    """
    mask = (pred.t >= gt.t[0]) & (pred.t <= gt.t[-1])
    if not mask.any():
        raise ValidationError(
            f"no temporal overlap: prediction [{pred.t[0]}, {pred.t[-1]}] vs "
            f"ground truth [{gt.t[0]}, {gt.t[-1]}]"
        )
    gx = np.interp(pred.t[mask], gt.t, gt.x)
    gy = np.interp(pred.t[mask], gt.t, gt.y)
    return float(np.hypot(pred.x[mask] - gx, pred.y[mask] - gy).mean())


def medp(pred: Trajectory, gt: Trajectory) -> float:
    """Mean distance from predicted points to the ground-truth path (time-free)."""
    ax, ay = gt.x[:-1], gt.y[:-1]
    bx, by = gt.x[1:], gt.y[1:]
    d2 = kernels.segments_dist_sq(pred.x, pred.y, ax, ay, bx, by)
    return float(np.sqrt(d2.min(axis=1)).mean())


def god(pred: Trajectory, gt: Trajectory) -> float:
    """Absolute angle between the end-to-end displacement vectors."""
    v1 = np.array([pred.x[-1] - pred.x[0], pred.y[-1] - pred.y[0]])
    v2 = np.array([gt.x[-1] - gt.x[0], gt.y[-1] - gt.y[0]])
    n1, n2 = np.hypot(*v1), np.hypot(*v2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0  # zero displacement: no orientation, by convention
    a1 = math.atan2(v1[1], v1[0])
    a2 = math.atan2(v2[1], v2[0])
    d = abs(a1 - a2) % (2 * math.pi)
    return d if d <= math.pi else 2 * math.pi - d


def avd(pred: Trajectory, gt: Trajectory) -> float:
    """Absolute difference of mean speeds (arc length over duration)."""

    def mean_speed(traj: Trajectory) -> float:
        dur = traj.t[-1] - traj.t[0]
        return traj.length_m() / dur if dur > 0 else 0.0

    return abs(mean_speed(pred) - mean_speed(gt))


def combined_measure(
    pred: Trajectory, gt: Trajectory, weights: dict | None = None
) -> SimilarityBreakdown:
    """Weighted sum of the four components (weights must be non-negative)."""
    w = dict(DEFAULT_WEIGHTS)
    if weights:
        unknown = set(weights) - set(w)
        if unknown:
            raise ValidationError(f"unknown metric weights: {sorted(unknown)}")
        w.update(weights)
    if any(v < 0 for v in w.values()):
        raise ValidationError(f"metric weights must be >= 0: {w}")
    m_t = medt(pred, gt)
    m_p = medp(pred, gt)
    m_g = god(pred, gt)
    m_v = avd(pred, gt)
    combined = w["medt"] * m_t + w["medp"] * m_p + w["god"] * m_g + w["avd"] * m_v
    return SimilarityBreakdown(m_t, m_p, m_g, m_v, combined, w)

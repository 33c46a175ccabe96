"""Multi-hypothesis trajectory prediction on a behavior map.

The observed vehicle is associated to a directed edge, possible edge
sequences are expanded through the graph up to the horizon, per-sequence
probabilities come from velocity-interpolated transition rows, and the
sequence's prototype trajectories are warped onto the observed trajectory
end with a linearly decaying shift so the prediction is C0-continuous.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from traj_atlas.behavior import BehaviorMap, EdgePrototype, TransitionTable, _times_from_speeds
from traj_atlas.core import Trajectory, ValidationError, VehicleState, mean_speed_over_window, truncate_at_arc_length
from traj_atlas.graph import NodeKind
from traj_atlas.matching import EdgeIndex


class NoMapCoverageError(ValidationError):
    """The observed state is not within snapping range of any edge."""


class DegenerateSegmentError(ValidationError):
    """transform_segment needs at least two points to blend."""


@dataclass(frozen=True)
class InterpolationTrace:
    """Audit record of one velocity interpolation between cluster rows."""

    v_m: float
    v_slow: float
    v_fast: float
    delta_slow: float
    delta_fast: float
    delta: float
    p_slow: dict[int, float]
    p_fast: dict[int, float]
    p: dict[int, float]


def interpolate_probability(v_m: float, table: TransitionTable) -> InterpolationTrace:
    """Blend the two neighbouring cluster rows linearly in velocity.

    With the cluster centers strictly increasing, the row of the nearest
    center is used directly when the node has a single cluster or ``v_m``
    falls outside the center range; otherwise each successor gets
    ``p_slow * delta_fast / delta + p_fast * delta_slow / delta``.
    """
    centers = table.centers()
    if len(centers) == 0:
        raise ValidationError(f"node {table.node_id}: empty transition table")
    successors = table.out_edges()

    def full_row(i: int) -> dict[int, float]:
        row = table.row(i)
        return {j: row.get(j, 0.0) for j in successors}

    if len(centers) == 1 or v_m <= centers[0]:
        row = full_row(0)
        c = float(centers[0])
        return InterpolationTrace(v_m, c, c, abs(v_m - c), abs(c - v_m), 0.0, row, row, dict(row))
    if v_m >= centers[-1]:
        row = full_row(len(centers) - 1)
        c = float(centers[-1])
        return InterpolationTrace(v_m, c, c, abs(v_m - c), abs(c - v_m), 0.0, row, row, dict(row))

    hi = int(np.searchsorted(centers, v_m, side="left"))
    lo = hi - 1
    v_slow, v_fast = float(centers[lo]), float(centers[hi])
    p_slow = full_row(lo)
    p_fast = full_row(hi)
    d_slow = abs(v_m - v_slow)
    d_fast = abs(v_m - v_fast)
    d = abs(v_fast - v_slow)
    p = {j: p_slow[j] * (d_fast / d) + p_fast[j] * (d_slow / d) for j in successors}
    return InterpolationTrace(v_m, v_slow, v_fast, d_slow, d_fast, d, p_slow, p_fast, p)


def associate_edge(
    state: VehicleState,
    bmap: BehaviorMap,
    max_snap_m: float = 3.0,
    heading_weight: float = 1.0,
    index: EdgeIndex | None = None,
) -> int:
    """Best matching directed edge for a vehicle state.

    Scores every edge within snapping distance with
    ``distance / max_snap + heading_weight * (1 - cos(heading difference))``
    and returns the argmin (ties to the smaller edge id).
    """
    if index is None:
        index = EdgeIndex(bmap.graph)
    if len(index.edge_ids) == 0:
        raise NoMapCoverageError("graph has no edges")
    d2 = index.min_dist_sq_per_edge(np.array([state.x]), np.array([state.y]))[0]
    snap_sq = max_snap_m * max_snap_m
    best = None
    best_score = None
    hx, hy = math.cos(state.heading), math.sin(state.heading)
    for col, eid in enumerate(index.edge_ids):
        if d2[col] > snap_sq:
            continue
        ux, uy = index.local_direction(int(eid), state.x, state.y)
        score = math.sqrt(d2[col]) / max_snap_m + heading_weight * (1.0 - (ux * hx + uy * hy))
        if best_score is None or score < best_score or (score == best_score and eid < best):
            best_score = score
            best = int(eid)
    if best is None:
        raise NoMapCoverageError(
            f"no edge within {max_snap_m} m of ({state.x:.2f}, {state.y:.2f})"
        )
    return best


def _successor_choices(
    bmap: BehaviorMap,
    in_edge: int,
    v_cur: float,
    min_obs: int = 2,
    min_branch_p: float = 0.05,
    min_obs_fraction: float = 0.1,
) -> list[tuple[int, float]]:
    """Successor edges of ``in_edge`` with branch probabilities.

    Decision-style nodes branch over the successors observed from this
    in-edge with the interpolated row renormalized onto them; other nodes
    continue deterministically along the observed mapping.  Continuations
    rarer than ``min_obs`` occurrences or ``min_obs_fraction`` of the
    in-edge's traffic are treated as matching noise, and branches below
    ``min_branch_p`` are pruned (probability renormalized over the
    survivors), so near-certain situations yield one hypothesis.
    """
    node_id = bmap.graph.edges[in_edge].to_node
    node = bmap.graph.nodes[node_id]
    if node.kind is NodeKind.END:
        return []
    observed = bmap.observed_successors_of(in_edge, min_count=min_obs, min_fraction=min_obs_fraction)
    if not observed:
        return []
    if len(observed) == 1:
        return [(observed[0], 1.0)]
    table = bmap.table_for(node_id, in_edge)
    if table is None:
        w = 1.0 / len(observed)
        return [(j, w) for j in observed]
    trace = interpolate_probability(v_cur, table)
    weights = {j: trace.p.get(j, 0.0) for j in observed}
    total = sum(weights.values())
    if total <= 0.0:
        w = 1.0 / len(observed)
        return [(j, w) for j in observed]
    kept = {j: w / total for j, w in weights.items() if w / total >= min_branch_p}
    if not kept:
        best = max(weights.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        kept = {best: 1.0}
    total = sum(kept.values())
    return [(j, w / total) for j, w in sorted(kept.items())]


def enumerate_sequences(
    start_edge: int,
    horizon_m: float,
    bmap: BehaviorMap,
    consumed_on_start_m: float = 0.0,
    v_m: float | None = None,
    max_depth: int = 64,
    min_obs: int = 2,
    min_branch_p: float = 0.05,
) -> list[list[int]]:
    """All edge sequences reachable within the arc-length horizon."""
    if horizon_m <= 0:
        raise ValidationError(f"horizon must be > 0, got {horizon_m}")
    out: list[list[int]] = []
    start_len = bmap.graph.edges[start_edge].length - consumed_on_start_m
    v0 = v_m if v_m is not None else _edge_speed(bmap, start_edge)

    def expand(seq: list[int], covered: float, v_cur: float, vm_active: bool):
        if covered >= horizon_m or len(seq) >= max_depth:
            out.append(seq)
            return
        choices = _successor_choices(bmap, seq[-1], v_cur, min_obs, min_branch_p)
        if not choices:
            out.append(seq)
            return
        still_observed = vm_active and len(choices) == 1
        for nxt, _w in choices:
            proto = _pick_prototype(bmap, nxt, v_cur)
            v_next = v_cur if still_observed else _tail_speed(proto, v_cur)
            expand(seq + [nxt], covered + bmap.graph.edges[nxt].length, v_next, still_observed)

    expand([start_edge], start_len, v0, v_m is not None)
    return out


def _edge_speed(bmap: BehaviorMap, edge_id: int) -> float:
    protos = bmap.edge_prototypes.get(edge_id, [])
    return protos[0].center if protos else 8.0


def _pick_prototype(bmap: BehaviorMap, edge_id: int, v_cur: float) -> EdgePrototype | None:
    protos = bmap.edge_prototypes.get(edge_id, [])
    if not protos:
        return None
    return min(protos, key=lambda p: (abs(p.center - v_cur), p.center))


def _tail_speed(proto: EdgePrototype | None, fallback: float) -> float:
    if proto is None or len(proto.speeds) == 0:
        return fallback
    return float(proto.speeds[-1])


@dataclass(frozen=True)
class SegmentTransform:
    """Result of warping a prototype tail onto the observed trajectory end."""

    v_n: np.ndarray  # junction vector applied to the segment's first point
    n_seg: int
    points: np.ndarray  # transformed segment followed by the untouched remainder
    speeds: np.ndarray


def transform_segment(
    proto_points: np.ndarray,
    proto_speeds: np.ndarray,
    observed_end: np.ndarray,
    cut_index: int,
    n_seg: int,
) -> SegmentTransform:
    """Shift the prototype segment onto the observed end with a decaying blend.

    Point ``k`` of the cut segment moves by ``(1 - k / (n_seg - 1)) * v_n``
    where ``v_n`` carries the segment's first point exactly onto the observed
    trajectory end; the segment's last point and everything after it stay
    put.
    """
    pts = np.asarray(proto_points, dtype=np.float64)
    spd = np.asarray(proto_speeds, dtype=np.float64)
    tail = pts[cut_index:]
    tail_speeds = spd[cut_index:]
    n_avail = len(tail)
    n_seg = min(n_seg, n_avail)
    if n_seg < 2:
        raise DegenerateSegmentError(f"segment needs >= 2 points, got {n_seg}")
    v_n = np.asarray(observed_end, dtype=np.float64) - tail[0]
    k = np.arange(n_seg, dtype=np.float64)
    f = 1.0 - k / (n_seg - 1)
    moved = tail[:n_seg] + f[:, None] * v_n
    points = np.concatenate([moved, tail[n_seg:]], axis=0)
    return SegmentTransform(v_n=v_n, n_seg=n_seg, points=points, speeds=tail_speeds.copy())


@dataclass(frozen=True)
class PredictionHypothesis:
    trajectory: Trajectory
    probability: float
    edge_sequence: tuple[int, ...]


@dataclass(frozen=True)
class PredictionResult:
    status: str  # "ok" | "no_coverage"
    hypotheses: tuple[PredictionHypothesis, ...] = ()

    def to_json_list(self) -> list:
        return [
            {
                "probability": h.probability,
                "edge_sequence": list(h.edge_sequence),
                "points": [
                    [float(t), float(x), float(y)]
                    for t, x, y in zip(h.trajectory.t, h.trajectory.x, h.trajectory.y)
                ],
            }
            for h in self.hypotheses
        ]


def _segment_span_points(
    proto: EdgePrototype, cut_index: int, join_dist: float, min_span_m: float = 5.0
) -> int:
    """Number of prototype points the blend should cover at a join."""
    pts = proto.points[cut_index:]
    if len(pts) < 2:
        return len(pts)
    d = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(d)])
    want = max(min_span_m, 2.0 * join_dist)
    n = int(np.searchsorted(s, want, side="right")) + 1
    return max(2, min(n, len(pts)))


def predict(
    observed: Trajectory,
    bmap: BehaviorMap,
    horizon_m: float,
    max_snap_m: float = 3.0,
    heading_weight: float = 1.0,
    vm_window_s: float = 1.0,
    min_obs: int = 2,
    min_branch_p: float = 0.05,
    index: EdgeIndex | None = None,
) -> PredictionResult:
    """Predict hypotheses for the vehicle at the end of ``observed``.

    Hypothesis probabilities multiply the branch probabilities of every
    decision passed; each hypothesis starts exactly at the observed end and
    is truncated at ``horizon_m`` of arc length.  Returns a ``no_coverage``
    status when no edge is in range.
    """
    if observed.speed is None:
        raise ValidationError("predict needs derived kinematics on the observed trajectory")
    if index is None:
        index = EdgeIndex(bmap.graph)
    v_m = mean_speed_over_window(observed, vm_window_s)
    state = VehicleState(
        x=float(observed.x[-1]),
        y=float(observed.y[-1]),
        heading=float(observed.heading[-1]),
        speed=v_m,
    )
    try:
        start_edge = associate_edge(state, bmap, max_snap_m, heading_weight, index)
    except NoMapCoverageError:
        return PredictionResult(status="no_coverage")

    observed_end = np.array([state.x, state.y])
    hypotheses: list[PredictionHypothesis] = []

    def assemble(
        seq: list[int], prob: float, chain_pts, chain_spd, v_cur: float, covered: float, vm_active: bool
    ):
        if covered >= horizon_m or len(seq) >= 64:
            _finish(seq, prob, chain_pts, chain_spd)
            return
        choices = _successor_choices(bmap, seq[-1], v_cur, min_obs, min_branch_p)
        if not choices:
            _finish(seq, prob, chain_pts, chain_spd)
            return
        # the measured speed stays authoritative until the first real branch;
        # past it each hypothesis follows its own prototype's time law
        still_observed = vm_active and len(choices) == 1
        for nxt, w in choices:
            pts, spd, new_cov = _append_edge(chain_pts, chain_spd, nxt, v_cur, covered)
            if still_observed:
                v_next = v_cur
            else:
                v_next = float(spd[-1]) if len(spd) else v_cur
            assemble(seq + [nxt], prob * w, pts, spd, v_next, new_cov, still_observed)

    def _append_edge(chain_pts, chain_spd, edge_id: int, v_cur: float, covered: float):
        proto = _pick_prototype(bmap, edge_id, v_cur)
        cur_end = chain_pts[-1]
        if proto is None or len(proto.points) < 2:
            poly = bmap.graph.edges[edge_id].polyline
            proto = EdgePrototype(v_cur, 0, poly, np.full(len(poly), max(v_cur, 0.1)))
        dists = np.hypot(*(proto.points - cur_end).T)
        cut = int(np.argmin(dists))
        if cut >= len(proto.points) - 1:
            return chain_pts, chain_spd, covered
        n_seg = _segment_span_points(proto, cut, float(dists[cut]))
        tr = transform_segment(proto.points, proto.speeds, cur_end, cut, n_seg)
        pts = np.concatenate([chain_pts, tr.points[1:]], axis=0)
        spd = np.concatenate([chain_spd, tr.speeds[1:]])
        added = float(np.hypot(*np.diff(tr.points, axis=0).T).sum())
        return pts, spd, covered + added

    def _finish(seq: list[int], prob: float, chain_pts, chain_spd):
        pts = np.asarray(chain_pts)
        spd = np.asarray(chain_spd)
        keep = np.ones(len(pts), dtype=bool)
        if len(pts) > 1:
            step = np.hypot(*np.diff(pts, axis=0).T)
            keep[1:] = step > 1e-12
        pts, spd = pts[keep], spd[keep]
        if len(pts) < 2:
            return
        times = observed.t[-1] + _times_from_speeds(pts, spd)
        traj = Trajectory(
            id=f"{observed.id}/hyp{len(hypotheses)}",
            t=times,
            x=pts[:, 0],
            y=pts[:, 1],
            speed=spd,
            heading=None,
        )
        traj = truncate_at_arc_length(traj, horizon_m)
        hypotheses.append(PredictionHypothesis(traj, prob, tuple(seq)))

    start_pts = np.array([observed_end])
    start_spd = np.array([v_m])
    pts, spd, covered = _append_edge(start_pts, start_spd, start_edge, v_m, 0.0)
    assemble([start_edge], 1.0, pts, spd, v_m, covered, vm_active=True)

    hypotheses.sort(key=lambda h: (-h.probability, h.edge_sequence))
    return PredictionResult(status="ok", hypotheses=tuple(hypotheses))


def save_predictions(result: PredictionResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_list(), fh, indent=1)

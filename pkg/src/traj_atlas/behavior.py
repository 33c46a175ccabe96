"""Velocity clusters, transition tables and prototype trajectories.

Approach speeds are sampled a configurable distance before each node where
maneuvers split, grouped by a density stage (an epsilon-neighbourhood /
min-count rule specialized to scalar speeds) followed by an agglomerative
merge of clusters whose centers sit closer than ``merge_gap``.  Transition
probabilities are exact quotients of integer counts.  Each directed edge
carries one prototype trajectory per velocity cluster, produced by a sweep
that averages member positions at common stations along the travel
direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from traj_atlas.core import Trajectory, ValidationError
from traj_atlas.graph import TopoGraph
from traj_atlas.matching import (
    MatchedTrajectory,
    continuation_counts,
    decision_like_nodes,
)


@dataclass(frozen=True)
class VelocityCluster:
    index: int
    center: float  # m/s, mean member approach speed
    member_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.member_ids)


@dataclass
class TransitionTable:
    """Per-cluster outgoing-edge counts at one node; probabilities are n_ij / n_i."""

    node_id: int
    clusters: list[VelocityCluster]
    counts: list[dict[int, int]]  # parallel to clusters: out-edge id -> count

    def n_i(self, i: int) -> int:
        return sum(self.counts[i].values())

    def row(self, i: int) -> dict[int, float]:
        total = self.n_i(i)
        return {j: c / total for j, c in sorted(self.counts[i].items())}

    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.clusters])

    def out_edges(self) -> list[int]:
        seen = set()
        for row in self.counts:
            seen.update(row)
        return sorted(seen)


def sample_approach_velocity(
    traj: Trajectory,
    node_xy: tuple[float, float],
    lookback_m: float = 10.0,
    max_snap_m: float = 3.0,
) -> float:
    """Mean derived speed over the last ``lookback_m`` meters before the node.

    The node position is located on the trajectory by closest approach; the
    window is the arc-length interval ending there.  Raises if the
    trajectory never comes within ``max_snap_m`` of the node.
    """
    if traj.speed is None:
        raise ValidationError("sample_approach_velocity needs derived speeds")
    dx = traj.x - node_xy[0]
    dy = traj.y - node_xy[1]
    dist = np.hypot(dx, dy)
    k = int(np.argmin(dist))
    if dist[k] > max_snap_m:
        raise ValidationError(
            f"trajectory {traj.id!r} never approaches node at {node_xy} "
            f"(min distance {dist[k]:.2f} m)"
        )
    s = traj.arc_lengths()
    mask = (np.arange(len(traj)) <= k) & (s >= s[k] - lookback_m)
    return float(traj.speed[mask].mean())


def _agglomerate(groups: list[list[int]], values: np.ndarray, merge_gap: float) -> list[list[int]]:
    """Single-linkage merge of center-adjacent groups until all gaps >= merge_gap."""
    groups = [sorted(g) for g in groups]
    while len(groups) > 1:
        centers = [float(values[g].mean()) for g in groups]
        order = np.argsort(centers, kind="stable")
        groups = [groups[i] for i in order]
        centers = [centers[i] for i in order]
        gaps = [centers[i + 1] - centers[i] for i in range(len(groups) - 1)]
        k = int(np.argmin(gaps))
        if gaps[k] >= merge_gap:
            break
        groups[k] = sorted(groups[k] + groups.pop(k + 1))
    return sorted(groups, key=lambda g: float(values[g].mean()))


def cluster_velocities(
    samples: np.ndarray,
    eps: float = 1.5,
    min_pts: int = 3,
    merge_gap: float = 2.0,
) -> list[list[int]]:
    """Group scalar speeds; returns member-index lists sorted by cluster center.

    Stage one is a density grouping: points with at least ``min_pts``
    neighbours within ``eps`` seed clusters that grow through density
    reachability.  Stage two merges adjacent clusters whose centers differ
    by less than ``merge_gap`` and attaches leftover noise samples to the
    nearest surviving cluster.  If no dense group exists at all the samples
    are grouped agglomeratively on their own.
    """
    v = np.asarray(samples, dtype=np.float64)
    if len(v) == 0:
        return []
    n = len(v)
    neighbor = [np.nonzero(np.abs(v - v[i]) <= eps)[0] for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbor])
    label = np.full(n, -1, dtype=np.int64)
    cid = 0
    for i in range(n):
        if label[i] != -1 or not core[i]:
            continue
        stack = [i]
        label[i] = cid
        while stack:
            p = stack.pop()
            if not core[p]:
                continue
            for q in neighbor[p]:
                if label[q] == -1:
                    label[q] = cid
                    stack.append(int(q))
        cid += 1

    if cid == 0:
        groups = _agglomerate([[i] for i in range(n)], v, merge_gap)
        return groups

    groups = [sorted(np.nonzero(label == c)[0].tolist()) for c in range(cid)]
    groups = _agglomerate(groups, v, merge_gap)
    noise = np.nonzero(label == -1)[0]
    if len(noise) > 0:
        centers = np.array([v[g].mean() for g in groups])
        for i in noise:
            groups[int(np.argmin(np.abs(centers - v[i])))].append(int(i))
        groups = [sorted(g) for g in groups]
        groups = sorted(groups, key=lambda g: float(v[g].mean()))
    return groups


@dataclass(frozen=True)
class Crossing:
    """One trajectory passing a node: the in-edge (None at Start nodes) and out-edge."""

    trajectory_id: str
    in_edge: int | None
    out_edge: int


def node_crossings(g: TopoGraph, matches: list[MatchedTrajectory]) -> dict[int, list[Crossing]]:
    """First observed crossing per (trajectory, node), for every node."""
    out: dict[int, list[Crossing]] = {nid: [] for nid in g.nodes}
    for m in matches:
        if m.unmatched or not m.edge_sequence:
            continue
        seen_nodes = set()
        first = g.edges[m.edge_sequence[0]]
        if first.from_node in out and first.from_node not in seen_nodes:
            out[first.from_node].append(Crossing(m.trajectory_id, None, first.id))
            seen_nodes.add(first.from_node)
        for a, b in zip(m.edge_sequence, m.edge_sequence[1:]):
            node = g.edges[a].to_node
            if node in out and node not in seen_nodes:
                out[node].append(Crossing(m.trajectory_id, a, b))
                seen_nodes.add(node)
    return out


def _table_from_events(
    nid: int,
    events: list[Crossing],
    speeds: np.ndarray,
    eps: float,
    min_pts: int,
    merge_gap: float,
) -> TransitionTable:
    groups = cluster_velocities(speeds, eps, min_pts, merge_gap)
    clusters = []
    counts = []
    for ci, g_idx in enumerate(groups):
        members = tuple(events[i].trajectory_id for i in g_idx)
        clusters.append(VelocityCluster(ci, float(speeds[g_idx].mean()), members))
        row: dict[int, int] = {}
        for i in g_idx:
            row[events[i].out_edge] = row.get(events[i].out_edge, 0) + 1
        counts.append(row)
    return TransitionTable(nid, clusters, counts)


def build_transition_tables(
    g: TopoGraph,
    matches: list[MatchedTrajectory],
    trajs_by_id: dict[str, Trajectory],
    node_ids: list[int] | None = None,
    lookback_m: float = 10.0,
    max_snap_m: float = 3.0,
    eps: float = 1.5,
    min_pts: int = 3,
    merge_gap: float = 2.0,
) -> tuple[dict[int, TransitionTable], dict[tuple[int, int], TransitionTable]]:
    """Velocity-conditioned transition tables for the given nodes.

    Defaults to Decision nodes plus multi-exit Start nodes.  Every crossing
    trajectory lands in exactly one cluster; rows reproduce the quotient of
    stored integer counts and sum to one by construction.  Returns the
    per-node tables plus in-edge-conditioned tables for nodes with several
    observed in-edges (there the incoming edge carries most of the signal,
    and pooling crossings from different roads would blur it).
    """
    if node_ids is None:
        node_ids = decision_like_nodes(g)
    crossings = node_crossings(g, matches)
    tables: dict[int, TransitionTable] = {}
    in_tables: dict[tuple[int, int], TransitionTable] = {}
    for nid in sorted(node_ids):
        events = [c for c in crossings.get(nid, []) if c.trajectory_id in trajs_by_id]
        if not events:
            continue
        node = g.nodes[nid]
        # crossing trajectories can pass a merged-junction centroid a little
        # wider than the matching snap; the closest approach is still sound
        speeds = np.array(
            [
                sample_approach_velocity(
                    trajs_by_id[c.trajectory_id], (node.x, node.y), lookback_m, 3.0 * max_snap_m
                )
                for c in events
            ]
        )
        tables[nid] = _table_from_events(nid, events, speeds, eps, min_pts, merge_gap)
        in_edges = sorted({c.in_edge for c in events if c.in_edge is not None})
        if len(in_edges) > 1:
            for ie in in_edges:
                idx = [i for i, c in enumerate(events) if c.in_edge == ie]
                sub = [events[i] for i in idx]
                in_tables[(nid, ie)] = _table_from_events(
                    nid, sub, speeds[idx], eps, min_pts, merge_gap
                )
    return tables, in_tables


def edge_member_run(match: MatchedTrajectory, edge_id: int) -> tuple[int, int] | None:
    """First contiguous index run of timestamps assigned to the edge."""
    idx = np.nonzero(match.point_edges == edge_id)[0]
    if len(idx) == 0:
        return None
    start = int(idx[0])
    stop = start
    for i in idx:
        if i == stop:
            stop += 1
        else:
            break
    return start, stop


def extract_prototype(
    segments: list[tuple[np.ndarray, np.ndarray]],
    min_lns: int = 3,
    step_m: float = 1.0,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Representative path of member segments via a direction-aligned sweep.

    Members are projected on their average travel direction and averaged at
    regular stations where at least ``min(min_lns, n_members)`` of them are
    present.  Returns ``(points (k, 2), speeds (k,))`` or None when fewer
    than two stations qualify.
    """
    segments = [(np.asarray(xy, dtype=np.float64), np.asarray(sp, dtype=np.float64))
                for xy, sp in segments if len(xy) >= 2]
    if not segments:
        return None
    dirs = np.array([xy[-1] - xy[0] for xy, _ in segments])
    u = dirs.sum(axis=0)
    norm = np.hypot(*u)
    if norm == 0:
        return None
    u = u / norm
    projected = []
    for xy, sp in segments:
        proj = xy @ u
        proj = np.maximum.accumulate(proj)  # guard against minor backtracking
        projected.append((proj, xy, sp))
    lo = min(p[0][0] for p in projected)
    hi = max(p[0][-1] for p in projected)
    if hi - lo < step_m:
        return None
    need = min(min_lns, len(segments))
    stations = np.arange(lo, hi + step_m * 0.5, step_m)
    pts = []
    spd = []
    for s in stations:
        acc_xy = []
        acc_sp = []
        for proj, xy, sp in projected:
            if proj[0] <= s <= proj[-1]:
                acc_xy.append([np.interp(s, proj, xy[:, 0]), np.interp(s, proj, xy[:, 1])])
                acc_sp.append(np.interp(s, proj, sp))
        if len(acc_xy) >= need:
            pts.append(np.mean(acc_xy, axis=0))
            spd.append(float(np.mean(acc_sp)))
    if len(pts) < 2:
        return None
    return np.asarray(pts), np.asarray(spd)


@dataclass(frozen=True)
class EdgePrototype:
    center: float  # velocity-cluster center the prototype belongs to
    n: int  # member count behind it
    points: np.ndarray  # (k, 2)
    speeds: np.ndarray  # (k,)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        s = np.asarray(self.speeds, dtype=np.float64)
        p.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "speeds", s)


def _resample_polyline(poly: np.ndarray, step_m: float) -> np.ndarray:
    d = np.hypot(*np.diff(poly, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0:
        return poly[:2].copy()
    stations = np.arange(0.0, s[-1] + step_m * 0.5, step_m)
    if stations[-1] < s[-1]:
        stations = np.append(stations, s[-1])
    return np.column_stack([np.interp(stations, s, poly[:, 0]), np.interp(stations, s, poly[:, 1])])


def build_edge_prototypes(
    g: TopoGraph,
    matches: list[MatchedTrajectory],
    trajs_by_id: dict[str, Trajectory],
    tables: dict[int, TransitionTable],
    min_lns: int = 3,
    step_m: float = 1.0,
    eps: float = 1.5,
    merge_gap: float = 2.0,
) -> dict[int, list[EdgePrototype]]:
    """One prototype per (velocity cluster, directed edge), plus fallbacks.

    The cluster layout of an edge comes from the transition table of its
    start node when one exists, else from its end node (approach edges carry
    the velocity split of the decision they feed), else the edge's users are
    grouped by their own mean speed on the edge.  Keeping the groups apart
    matters for the time law: pooling decelerating turners with through
    traffic would average away both speed profiles.  Edges without usable
    members fall back to their polyline at the mean observed speed.
    """
    runs_by_edge: dict[int, list[tuple[str, tuple[int, int]]]] = {}
    for m in matches:
        if m.unmatched:
            continue
        for eid in m.edge_sequence:
            run = edge_member_run(m, eid)
            if run is not None and run[1] - run[0] >= 2:
                runs_by_edge.setdefault(eid, []).append((m.trajectory_id, run))

    def segment_of(tid: str, run: tuple[int, int]):
        traj = trajs_by_id.get(tid)
        if traj is None or traj.speed is None:
            return None
        a, b = run
        return traj.xy[a:b], traj.speed[a:b]

    all_speeds = [
        trajs_by_id[tid].speed.mean()
        for tid in sorted(trajs_by_id)
        if trajs_by_id[tid].speed is not None
    ]
    global_speed = float(np.mean(all_speeds)) if all_speeds else 8.0

    prototypes: dict[int, list[EdgePrototype]] = {}
    for eid in sorted(g.edges):
        edge = g.edges[eid]
        users = runs_by_edge.get(eid, [])
        by_member = {}
        for tid, run in users:
            by_member.setdefault(tid, run)
        protos: list[EdgePrototype] = []

        table = tables.get(edge.from_node) or tables.get(edge.to_node)
        groups: list[tuple[float, list[str]]] = []
        if table is not None:
            groups = [(c.center, [tid for tid in c.member_ids if tid in by_member]) for c in table.clusters]
        elif users:
            tids = sorted(by_member)
            segs = {tid: segment_of(tid, by_member[tid]) for tid in tids}
            tids = [tid for tid in tids if segs[tid] is not None]
            speeds = np.array([float(segs[tid][1].mean()) for tid in tids])
            if len(speeds):
                for idxs in cluster_velocities(speeds, eps, min(3, len(speeds)), merge_gap):
                    groups.append((float(speeds[idxs].mean()), [tids[i] for i in idxs]))

        for center, members in groups:
            segs = []
            for tid in members:
                seg = segment_of(tid, by_member[tid])
                if seg is not None:
                    segs.append(seg)
            result = extract_prototype(segs, min_lns, step_m)
            if result is not None:
                protos.append(EdgePrototype(center, len(segs), *result))

        if not protos and users:
            segs = []
            speeds_acc = []
            for tid, run in sorted(by_member.items()):
                seg = segment_of(tid, run)
                if seg is not None:
                    segs.append(seg)
                    speeds_acc.append(float(seg[1].mean()))
            result = extract_prototype(segs, min_lns, step_m)
            if result is not None:
                center = float(np.mean(speeds_acc)) if speeds_acc else global_speed
                protos.append(EdgePrototype(center, len(segs), *result))
        if not protos:
            # geometric fallback: the edge polyline at a constant speed
            pts = _resample_polyline(edge.polyline, step_m)
            protos.append(
                EdgePrototype(global_speed, 0, pts, np.full(len(pts), global_speed))
            )
        protos.sort(key=lambda p: (p.center, -p.n))
        prototypes[eid] = protos
    return prototypes


@dataclass
class BehaviorMap:
    """Directed graph plus everything prediction needs."""

    graph: TopoGraph
    tables: dict[int, TransitionTable]
    edge_prototypes: dict[int, list[EdgePrototype]]
    continuations: dict[tuple[int, int], int]
    in_tables: dict[tuple[int, int], TransitionTable] = field(default_factory=dict)

    def observed_successors_of(
        self, in_edge: int, min_count: int = 1, min_fraction: float = 0.0
    ) -> list[int]:
        """Out-edges seen following ``in_edge``.

        A continuation must be observed at least ``min_count`` times and make
        up at least ``min_fraction`` of the in-edge's continuations; the
        fraction guards against sporadic mismatches at busy junctions, whose
        absolute counts grow with traffic.  When the thresholds leave
        nothing, the most frequent single continuation is kept so a noisy
        junction still continues somewhere.
        """
        node = self.graph.edges[in_edge].to_node
        pairs = [
            (b, n)
            for (a, b), n in self.continuations.items()
            if a == in_edge and n > 0 and self.graph.edges[b].from_node == node
        ]
        total = sum(n for _, n in pairs)
        floor = max(min_count, int(np.ceil(min_fraction * total)))
        kept = sorted(b for b, n in pairs if n >= floor)
        if kept or not pairs:
            return kept
        best = max(pairs, key=lambda bn: (bn[1], -bn[0]))
        return [best[0]]

    def table_for(self, node_id: int, in_edge: int | None = None) -> TransitionTable | None:
        """In-edge-conditioned table when one exists, else the node table."""
        if in_edge is not None:
            t = self.in_tables.get((node_id, in_edge))
            if t is not None:
                return t
        return self.tables.get(node_id)

    def to_json_dict(self) -> dict:
        data = self.graph.to_json_dict()
        for ed in data["edges"]:
            protos = self.edge_prototypes.get(ed["id"], [])
            ed["prototypes"] = [
                {
                    "center_mps": p.center,
                    "n": p.n,
                    "points": _proto_points_json(p),
                }
                for p in protos
            ]
        behavior = {}
        for nid in sorted(self.tables):
            block = {"clusters": self._clusters_json(self.tables[nid])}
            by_in = {
                str(ie): {"clusters": self._clusters_json(t)}
                for (n2, ie), t in sorted(self.in_tables.items())
                if n2 == nid
            }
            if by_in:
                block["by_in_edge"] = by_in
            behavior[str(nid)] = block
        data["behavior"] = behavior
        data["continuations"] = [
            [a, b, n] for (a, b), n in sorted(self.continuations.items())
        ]
        return data

    def _clusters_json(self, table: TransitionTable) -> list:
        clusters = []
        for ci, cluster in enumerate(table.clusters):
            row = table.row(ci)
            best_edge = max(row.items(), key=lambda kv: (kv[1], -kv[0]))[0]
            proto = _nearest_proto(self.edge_prototypes.get(best_edge, []), cluster.center)
            clusters.append(
                {
                    "center_mps": cluster.center,
                    "n": cluster.n,
                    "transitions": {str(j): p for j, p in row.items()},
                    "counts": {str(j): c for j, c in sorted(table.counts[ci].items())},
                    "members": list(cluster.member_ids),
                    "prototype": _proto_points_json(proto) if proto else [],
                }
            )
        return clusters

    @classmethod
    def from_json_dict(cls, data: dict) -> "BehaviorMap":
        graph = TopoGraph.from_json_dict(data)
        prototypes: dict[int, list[EdgePrototype]] = {}
        for ed in data["edges"]:
            protos = []
            for p in ed.get("prototypes", []):
                pts = np.asarray(p["points"], dtype=np.float64)
                protos.append(
                    EdgePrototype(p["center_mps"], p["n"], pts[:, :2], _speeds_from_times(pts))
                )
            prototypes[ed["id"]] = protos
        def parse_table(nid: int, block: dict) -> TransitionTable:
            clusters = []
            counts = []
            for ci, c in enumerate(block["clusters"]):
                clusters.append(
                    VelocityCluster(ci, c["center_mps"], tuple(c.get("members", ())))
                )
                counts.append({int(j): int(n) for j, n in c["counts"].items()})
            return TransitionTable(nid, clusters, counts)

        tables: dict[int, TransitionTable] = {}
        in_tables: dict[tuple[int, int], TransitionTable] = {}
        for nid_s, block in data.get("behavior", {}).items():
            nid = int(nid_s)
            tables[nid] = parse_table(nid, block)
            for ie_s, sub in block.get("by_in_edge", {}).items():
                in_tables[(nid, int(ie_s))] = parse_table(nid, sub)
        continuations = {(a, b): n for a, b, n in data.get("continuations", [])}
        return cls(graph, tables, prototypes, continuations, in_tables)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "BehaviorMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _proto_points_json(proto: EdgePrototype) -> list:
    """Prototype as [x, y, t] triples; t integrates distance over speed."""
    t = _times_from_speeds(proto.points, proto.speeds)
    return [[float(x), float(y), float(tt)] for (x, y), tt in zip(proto.points, t)]


def _times_from_speeds(points: np.ndarray, speeds: np.ndarray, floor: float = 0.1) -> np.ndarray:
    d = np.hypot(*np.diff(points, axis=0).T)
    v = np.maximum((speeds[:-1] + speeds[1:]) * 0.5, floor)
    return np.concatenate([[0.0], np.cumsum(d / v)])


def _speeds_from_times(pts_xyt: np.ndarray) -> np.ndarray:
    if len(pts_xyt) < 2:
        return np.zeros(len(pts_xyt))
    d = np.hypot(*np.diff(pts_xyt[:, :2], axis=0).T)
    dt = np.maximum(np.diff(pts_xyt[:, 2]), 1e-9)
    v = d / dt
    return np.concatenate([v, v[-1:]])


def _nearest_proto(protos: list[EdgePrototype], center: float) -> EdgePrototype | None:
    if not protos:
        return None
    return min(protos, key=lambda p: (abs(p.center - center), p.center))


def build_behavior_map(
    trajs: list[Trajectory],
    g: TopoGraph,
    matches: list[MatchedTrajectory],
    lookback_m: float = 10.0,
    max_snap_m: float = 3.0,
    eps: float = 1.5,
    min_pts: int = 3,
    merge_gap: float = 2.0,
    min_lns: int = 3,
    proto_step_m: float = 1.0,
) -> BehaviorMap:
    """Assemble tables, prototypes and continuation statistics on a classified graph."""
    trajs_by_id = {t.id: t for t in trajs}
    tables, in_tables = build_transition_tables(
        g, matches, trajs_by_id, None, lookback_m, max_snap_m, eps, min_pts, merge_gap
    )
    prototypes = build_edge_prototypes(
        g, matches, trajs_by_id, tables, min_lns, proto_step_m, eps, merge_gap
    )
    cont = continuation_counts(matches)
    cont = {k: v for k, v in cont.items() if k[0] in g.edges and k[1] in g.edges}
    return BehaviorMap(g, tables, prototypes, cont, in_tables)

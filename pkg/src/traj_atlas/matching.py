"""Map matching, direction pruning and node classification.

Each trajectory becomes an ordered, connected sequence of directed edge ids.
Edges never used by any sequence are dropped (turning the bidirectional
extraction result into a directed graph) and nodes are classified from the
observed in-edge to out-edge continuation statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from traj_atlas import kernels
from traj_atlas.core import Trajectory, ValidationError
from traj_atlas.graph import Edge, Node, NodeKind, TopoGraph


class EdgeIndex:
    """Flattened segment arrays for batched point-to-edge distance queries."""

    def __init__(self, g: TopoGraph):
        self.edge_ids = np.array(sorted(g.edges), dtype=np.int64)
        ax, ay, bx, by, starts = [], [], [], [], []
        for eid in self.edge_ids:
            poly = g.edges[int(eid)].polyline
            starts.append(len(ax))
            ax.extend(poly[:-1, 0])
            ay.extend(poly[:-1, 1])
            bx.extend(poly[1:, 0])
            by.extend(poly[1:, 1])
        self.seg_starts = np.array(starts, dtype=np.int64)
        self.ax = np.array(ax)
        self.ay = np.array(ay)
        self.bx = np.array(bx)
        self.by = np.array(by)
        self.graph = g

    def min_dist_sq_per_edge(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """(P, E) squared distances, columns ordered like ``edge_ids``."""
        d2 = kernels.segments_dist_sq(
            np.asarray(xs, dtype=np.float64),
            np.asarray(ys, dtype=np.float64),
            self.ax,
            self.ay,
            self.bx,
            self.by,
        )
        return np.minimum.reduceat(d2, self.seg_starts, axis=1)

    def local_direction(self, edge_id: int, x: float, y: float) -> tuple[float, float]:
        """Unit direction of the edge polyline at its point nearest to (x, y)."""
        poly = self.graph.edges[edge_id].polyline
        a = poly[:-1]
        b = poly[1:]
        d = b - a
        l2 = (d * d).sum(axis=1)
        l2s = np.where(l2 > 0, l2, 1.0)
        w = np.array([x, y]) - a
        t = np.clip((w * d).sum(axis=1) / l2s, 0.0, 1.0)
        c = a + t[:, None] * d
        k = int(np.argmin(((np.array([x, y]) - c) ** 2).sum(axis=1)))
        dx, dy = d[k]
        norm = math.hypot(dx, dy)
        if norm == 0:
            return 1.0, 0.0
        return dx / norm, dy / norm


@dataclass
class MatchedTrajectory:
    trajectory_id: str
    edge_sequence: list[int]
    point_edges: np.ndarray  # current edge id at every timestamp, -1 when unassociated
    unmatched: bool = False  # excluded from statistics when True


def _undirected_key(g: TopoGraph, eid: int) -> int:
    twin = g.edges[eid].twin_id
    return eid if twin is None else min(eid, twin)


def _densify(traj: Trajectory, step_m: float):
    """Insert intermediate samples so consecutive spacing stays <= step_m.

    Returns (x, y, heading, orig) where ``orig[k]`` is the original sample
    index or -1 for inserted points.  Original points are preserved exactly.
    """
    xs, ys, orig = [], [], []
    for i in range(len(traj) - 1):
        xs.append(traj.x[i])
        ys.append(traj.y[i])
        orig.append(i)
        dist = math.hypot(traj.x[i + 1] - traj.x[i], traj.y[i + 1] - traj.y[i])
        extra = int(dist // step_m)
        for k in range(1, extra + 1):
            fr = k / (extra + 1)
            xs.append(traj.x[i] + fr * (traj.x[i + 1] - traj.x[i]))
            ys.append(traj.y[i] + fr * (traj.y[i + 1] - traj.y[i]))
            orig.append(-1)
    xs.append(traj.x[-1])
    ys.append(traj.y[-1])
    orig.append(len(traj) - 1)
    x = np.asarray(xs)
    y = np.asarray(ys)
    heading = np.empty(len(x))
    prev = 0.0
    for i in range(len(x) - 1):
        dx, dy = x[i + 1] - x[i], y[i + 1] - y[i]
        if dx != 0.0 or dy != 0.0:
            prev = math.atan2(dy, dx)
        heading[i] = prev
    heading[-1] = heading[-2]
    return x, y, heading, np.asarray(orig, dtype=np.int64)


def match_trajectory(
    traj: Trajectory,
    g: TopoGraph,
    max_snap_m: float = 3.0,
    gap_tolerance: int = 10,
    index: EdgeIndex | None = None,
    densify_step_m: float = 0.5,
    swap_support: int = 8,
    min_alignment: float = 0.3,
    tie_slack_m: float = 1.0,
) -> MatchedTrajectory:
    """Match one trajectory to a connected directed edge sequence.

    The trajectory is walked at <= ``densify_step_m`` spacing (so short edges
    between junctions are never skipped between samples).  At each sample the
    nearest edge within ``max_snap_m`` becomes a candidate; of antiparallel
    twins the heading-aligned one is taken (alignment below ``min_alignment``
    rejects, which keeps perpendicular crossing edges out).  A candidate is
    appended when it differs from the current last edge and leaves that
    edge's end node (or the sequence is empty); candidates within
    ``tie_slack_m`` of the nearest distance are scanned in order so an
    unrelated crossing edge cannot shadow the admissible continuation.  A
    freshly appended branch with at most ``swap_support`` confirming samples
    may be swapped for a sibling branch leaving the same node, which undoes
    noise-driven wrong picks right at a fork.  More than ``gap_tolerance``
    consecutive original timestamps with no usable edge flag the trajectory
    as unmatched.
    """
    if traj.heading is None:
        raise ValidationError("match_trajectory needs derived headings")
    if index is None:
        index = EdgeIndex(g)
    if len(index.edge_ids) == 0:
        return MatchedTrajectory(traj.id, [], np.full(len(traj), -1, dtype=np.int64), True)

    snap_sq = max_snap_m * max_snap_m
    xs, ys, headings, orig = _densify(traj, densify_step_m)
    d2 = index.min_dist_sq_per_edge(xs, ys)
    edge_ids = index.edge_ids
    id_to_col = {int(e): i for i, e in enumerate(edge_ids)}

    seq: list[int] = []
    point_edges = np.full(len(traj), -1, dtype=np.int64)
    support = 0  # samples confirming seq[-1] since it was appended
    streak = 0
    unmatched = False

    def aligned_choice(cols, i):
        """Heading-aligned direction of the nearest undirected geometry."""
        hx, hy = math.cos(headings[i]), math.sin(headings[i])
        group: set[int] = set()
        for ci in cols:
            eid = int(edge_ids[ci])
            group.add(eid)
            twin = g.edges[eid].twin_id
            if twin is not None:
                group.add(twin)
        chosen = None
        best_dot = min_alignment
        for eid in sorted(group):
            ux, uy = index.local_direction(eid, xs[i], ys[i])
            dot = ux * hx + uy * hy
            if dot > best_dot:
                chosen = eid
                best_dot = dot
        return chosen

    def try_admit(chosen):
        nonlocal support
        if chosen is None:
            return False
        if not seq:
            seq.append(chosen)
            support = 0
            return True
        if chosen == seq[-1]:
            support += 1
            return True
        if g.edges[chosen].from_node == g.edges[seq[-1]].to_node:
            seq.append(chosen)
            support = 0
            return True
        if (
            support <= swap_support
            and g.edges[chosen].from_node == g.edges[seq[-1]].from_node
            and (len(seq) < 2 or g.edges[chosen].from_node == g.edges[seq[-2]].to_node)
        ):
            seq[-1] = chosen  # sibling correction at the fork
            support = 0
            return True
        return False

    for i in range(len(xs)):
        row = d2[i]
        candidates = np.nonzero(row <= snap_sq)[0]
        ok = False
        if len(candidates) > 0:
            ordered = sorted(candidates, key=lambda ci: (row[ci], _undirected_key(g, int(edge_ids[ci]))))
            nearest_d = row[ordered[0]]
            # near-ties may hide the admissible continuation behind an
            # unrelated crossing edge; scan them in distance order
            limit = (math.sqrt(nearest_d) + tie_slack_m) ** 2
            tried: set[int] = set()
            for ci in ordered:
                if row[ci] > limit:
                    break
                key = _undirected_key(g, int(edge_ids[ci]))
                if key in tried:
                    continue
                tried.add(key)
                if try_admit(aligned_choice([ci], i)):
                    ok = True
                    break
            if not ok and seq:
                # still within snap of the current edge: treat as staying on it
                cur_col = id_to_col.get(seq[-1])
                if cur_col is not None and row[cur_col] <= snap_sq:
                    ok = True
        if orig[i] >= 0:
            if ok:
                streak = 0
                point_edges[orig[i]] = seq[-1]
            elif seq:
                # gaps only count once the trajectory has associated at all
                streak += 1
                if streak > gap_tolerance:
                    unmatched = True
    if not seq:
        unmatched = True
    return MatchedTrajectory(traj.id, seq, point_edges, unmatched)


def match_all(
    trajs,
    g: TopoGraph,
    max_snap_m: float = 3.0,
    gap_tolerance: int = 10,
    threads: int = 1,
    densify_step_m: float = 0.5,
    swap_support: int = 8,
    min_alignment: float = 0.3,
    tie_slack_m: float = 1.0,
) -> list[MatchedTrajectory]:
    """Match every trajectory; thread count never changes the result."""
    index = EdgeIndex(g)

    def one(traj):
        return match_trajectory(
            traj,
            g,
            max_snap_m,
            gap_tolerance,
            index,
            densify_step_m,
            swap_support,
            min_alignment,
            tie_slack_m,
        )

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, trajs))
    return [one(t) for t in trajs]


def continuation_counts(matches) -> dict[tuple[int, int], int]:
    """Observed (in-edge, out-edge) pair counts over all matched sequences."""
    counts: dict[tuple[int, int], int] = {}
    for m in matches:
        if m.unmatched:
            continue
        for a, b in zip(m.edge_sequence, m.edge_sequence[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts


def prune_unused_edges(g: TopoGraph, matches) -> TopoGraph:
    """Drop edges that never occur in any sequence; set traversal counts.

    Nodes left without any edge disappear too.  Twin links are recomputed,
    so a surviving one-way edge simply loses its twin.
    """
    usage: dict[int, int] = {}
    for m in matches:
        if m.unmatched:
            continue
        for eid in m.edge_sequence:
            usage[eid] = usage.get(eid, 0) + 1
    out = TopoGraph()
    for eid, e in g.edges.items():
        n = usage.get(eid, 0)
        if n > 0:
            out.edges[eid] = replace(e, traversal_count=n, twin_id=None)
    keep_nodes = {e.from_node for e in out.edges.values()} | {e.to_node for e in out.edges.values()}
    for nid in keep_nodes:
        out.nodes[nid] = g.nodes[nid]
    by_pair: dict[tuple[int, int], list[int]] = {}
    for e in out.edges.values():
        by_pair.setdefault((e.from_node, e.to_node), []).append(e.id)
    for e in list(out.edges.values()):
        twin = None
        for cand in sorted(by_pair.get((e.to_node, e.from_node), [])):
            if cand != e.id and np.array_equal(out.edges[cand].polyline, e.polyline[::-1]):
                twin = cand
                break
        out.edges[e.id] = replace(e, twin_id=twin)
    return out


def observed_successors(g: TopoGraph, cont: dict[tuple[int, int], int]) -> dict[int, dict[int, set]]:
    """Per node: observed successor out-edges of each in-edge."""
    succ: dict[int, dict[int, set]] = {nid: {} for nid in g.nodes}
    for (a, b), n in cont.items():
        if a in g.edges and b in g.edges and n > 0:
            node = g.edges[a].to_node
            if node == g.edges[b].from_node:
                succ[node].setdefault(a, set()).add(b)
    return succ


def classify_nodes(g: TopoGraph, cont: dict[tuple[int, int], int]) -> TopoGraph:
    """Assign Start/End/Crossover/Decision from degrees and observed splits.

    A node is Decision as soon as one in-edge (or a Start node itself) has
    two or more observed successors; Crossover needs multiple ins and outs
    with every observed in-edge continuing to exactly one out-edge.  Nodes
    matching no rule stay Unclassified.
    """
    inc, out = g.degree_maps()
    succ = observed_successors(g, cont)
    result = TopoGraph(edges=dict(g.edges))
    for nid, node in g.nodes.items():
        n_in, n_out = len(inc[nid]), len(out[nid])
        kind = NodeKind.UNCLASSIFIED
        if n_in == 0 and n_out > 0:
            kind = NodeKind.START
        elif n_out == 0 and n_in > 0:
            kind = NodeKind.END
        else:
            splits = succ.get(nid, {})
            if any(len(s) >= 2 for s in splits.values()):
                kind = NodeKind.DECISION
            elif n_in > 1 and n_out > 1 and splits and all(len(s) == 1 for s in splits.values()):
                kind = NodeKind.CROSSOVER
        result.nodes[nid] = Node(node.id, node.x, node.y, kind)
    return result


def decision_like_nodes(g: TopoGraph) -> list[int]:
    """Nodes that need velocity-conditioned transition tables.

    Decision nodes plus Start nodes with more than one outgoing edge.
    """
    _, out = g.degree_maps()
    picked = []
    for nid, node in g.nodes.items():
        if node.kind is NodeKind.DECISION:
            picked.append(nid)
        elif node.kind is NodeKind.START and len(out[nid]) > 1:
            picked.append(nid)
    return sorted(picked)


def matches_to_csv(matches, path) -> None:
    """Audit export: one row per (trajectory, sequence position)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trajectory_id,seq_index,edge_id\n")
        for m in matches:
            if m.unmatched:
                continue
            for k, eid in enumerate(m.edge_sequence):
                fh.write(f"{m.trajectory_id},{k},{eid}\n")

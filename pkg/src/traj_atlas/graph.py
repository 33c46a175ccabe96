"""Topological graph extraction from a skeleton image.

Node pixels are skeleton pixels with one (endpoints) or three-plus
(junctions) foreground neighbours; adjacent junction pixels merge into a
single node at their centroid.  Edges are the degree-2 pixel chains between
node pixels, lifted to world-space polylines and added in both directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from traj_atlas.core import ValidationError
from traj_atlas.raster import Skeleton, neighbor_counts

_NBHD = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class NodeKind(Enum):
    UNCLASSIFIED = "unclassified"
    START = "start"
    END = "end"
    CROSSOVER = "crossover"
    DECISION = "decision"


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    kind: NodeKind = NodeKind.UNCLASSIFIED


@dataclass(frozen=True)
class Edge:
    id: int
    from_node: int
    to_node: int
    polyline: np.ndarray  # (n, 2) world coordinates
    length: float
    traversal_count: int = 0
    twin_id: int | None = None  # antiparallel twin (absent once pruned away)

    def __post_init__(self):
        p = np.asarray(self.polyline, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 2 or len(p) < 2:
            raise ValidationError(f"edge {self.id}: polyline must be (n>=2, 2)")
        p.flags.writeable = False
        object.__setattr__(self, "polyline", p)


def polyline_length(points: np.ndarray) -> float:
    d = np.diff(np.asarray(points, dtype=np.float64), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


@dataclass
class TopoGraph:
    nodes: dict[int, Node] = field(default_factory=dict)
    edges: dict[int, Edge] = field(default_factory=dict)

    def out_edges(self, node_id: int) -> list[int]:
        return sorted(e.id for e in self.edges.values() if e.from_node == node_id)

    def in_edges(self, node_id: int) -> list[int]:
        return sorted(e.id for e in self.edges.values() if e.to_node == node_id)

    def degree_maps(self) -> tuple[dict[int, list[int]], dict[int, list[int]]]:
        """(incoming, outgoing) edge-id lists per node, in one sweep."""
        inc: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        out: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for e in sorted(self.edges.values(), key=lambda e: e.id):
            out[e.from_node].append(e.id)
            inc[e.to_node].append(e.id)
        return inc, out

    def to_json_dict(self) -> dict:
        nodes = [
            {"id": n.id, "x_m": n.x, "y_m": n.y, "kind": n.kind.value}
            for n in sorted(self.nodes.values(), key=lambda n: n.id)
        ]
        edges = [
            {
                "id": e.id,
                "from": e.from_node,
                "to": e.to_node,
                "polyline": [[float(x), float(y)] for x, y in e.polyline],
                "traversal_count": e.traversal_count,
            }
            for e in sorted(self.edges.values(), key=lambda e: e.id)
        ]
        return {"nodes": nodes, "edges": edges}

    @classmethod
    def from_json_dict(cls, data: dict) -> "TopoGraph":
        g = cls()
        for nd in data["nodes"]:
            g.nodes[nd["id"]] = Node(nd["id"], nd["x_m"], nd["y_m"], NodeKind(nd["kind"]))
        for ed in data["edges"]:
            poly = np.asarray(ed["polyline"], dtype=np.float64)
            g.edges[ed["id"]] = Edge(
                id=ed["id"],
                from_node=ed["from"],
                to_node=ed["to"],
                polyline=poly,
                length=polyline_length(poly),
                traversal_count=ed.get("traversal_count", 0),
            )
        _relink_twins(g)
        return g

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "TopoGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _relink_twins(g: TopoGraph) -> None:
    """Recompute antiparallel twin links from geometry after (de)serialization."""
    by_pair: dict[tuple[int, int], list[int]] = {}
    for e in g.edges.values():
        by_pair.setdefault((e.from_node, e.to_node), []).append(e.id)
    for e in list(g.edges.values()):
        twin = None
        for cand_id in sorted(by_pair.get((e.to_node, e.from_node), [])):
            cand = g.edges[cand_id]
            if cand_id != e.id and np.array_equal(cand.polyline, e.polyline[::-1]):
                twin = cand_id
                break
        g.edges[e.id] = replace(e, twin_id=twin)


@dataclass(frozen=True)
class PixelNode:
    """A detected node: one endpoint pixel or a merged junction pixel clump."""

    index: int
    pixels: tuple[tuple[int, int], ...]  # (row, col)
    is_junction: bool

    @property
    def centroid(self) -> tuple[float, float]:
        rows = [p[0] for p in self.pixels]
        cols = [p[1] for p in self.pixels]
        return sum(rows) / len(rows), sum(cols) / len(cols)


def detect_nodes(skel: Skeleton) -> list[PixelNode]:
    """Find endpoint and junction pixels; merge adjacent junction pixels.

    Returned clusters are ordered by their smallest flat pixel index, which
    also defines node ids downstream.
    """
    mask = skel.values.astype(np.uint8)
    h, w = mask.shape
    counts = neighbor_counts(mask)
    endpoint = (mask == 1) & (counts == 1)
    junction = (mask == 1) & (counts >= 3)

    clusters: list[list[tuple[int, int]]] = []
    seen = np.zeros_like(mask, dtype=bool)
    for row, col in np.argwhere(junction):
        if seen[row, col]:
            continue
        stack = [(int(row), int(col))]
        seen[row, col] = True
        members = []
        while stack:
            cy, cx = stack.pop()
            members.append((cy, cx))
            for dy, dx in _NBHD:
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < h and 0 <= nx < w and junction[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    stack.append((ny, nx))
        clusters.append(sorted(members))
    for row, col in np.argwhere(endpoint):
        clusters.append([(int(row), int(col))])

    clusters.sort(key=lambda ms: ms[0][0] * w + ms[0][1])
    return [
        PixelNode(index=i, pixels=tuple(ms), is_junction=len(ms) > 1 or counts[ms[0]] >= 3)
        for i, ms in enumerate(clusters)
    ]


def trace_edges(
    skel: Skeleton, nodes: Sequence[PixelNode]
) -> tuple[list[tuple[int, int, list[tuple[int, int]]]], list[PixelNode]]:
    """Walk degree-2 chains between node pixels.

    Returns ``(paths, all_nodes)`` where each path is
    ``(from_node_index, to_node_index, pixel_chain)`` with the chain covering
    both terminal node pixels.  Isolated cycles get a synthetic anchor node
    (appended to ``all_nodes``) and come back as self-loops.  Chain pixels
    unreachable from any node are reported via logging and dropped.
    """
    mask = skel.values.astype(np.uint8)
    h, w = mask.shape
    node_at: dict[tuple[int, int], int] = {}
    for nd in nodes:
        for p in nd.pixels:
            node_at[p] = nd.index

    consumed = np.zeros_like(mask, dtype=bool)
    paths: list[tuple[int, int, list[tuple[int, int]]]] = []
    seen_direct: set[frozenset] = set()

    def walk(start_idx: int, p: tuple[int, int], q: tuple[int, int]):
        chain = [p, q]
        consumed[q] = True
        prev, cur = p, q
        while True:
            nxt_node = None
            nxt_chain = None
            for dy, dx in _NBHD:
                ny, nx = cur[0] + dy, cur[1] + dx
                if not (0 <= ny < h and 0 <= nx < w) or mask[ny, nx] == 0 or (ny, nx) == prev:
                    continue
                cand = (ny, nx)
                if cand in node_at:
                    if nxt_node is None:
                        nxt_node = cand
                elif not consumed[cand] and nxt_chain is None:
                    nxt_chain = cand
            if nxt_node is not None and (len(chain) > 2 or node_at[nxt_node] != start_idx or nxt_node != p):
                chain.append(nxt_node)
                return node_at[nxt_node], chain
            if nxt_chain is None:
                return None, chain  # dead end into consumed pixels
            consumed[nxt_chain] = True
            prev, cur = cur, nxt_chain
            chain.append(nxt_chain)

    all_nodes = list(nodes)
    for nd in nodes:
        for p in nd.pixels:
            for dy, dx in _NBHD:
                ny, nx = p[0] + dy, p[1] + dx
                if not (0 <= ny < h and 0 <= nx < w) or mask[ny, nx] == 0:
                    continue
                q = (ny, nx)
                if q in node_at:
                    other = node_at[q]
                    if other == nd.index:
                        continue  # internal clump adjacency
                    key = frozenset((p, q))
                    if key not in seen_direct:
                        seen_direct.add(key)
                        paths.append((nd.index, other, [p, q]))
                elif not consumed[q]:
                    end_idx, chain = walk(nd.index, p, q)
                    if end_idx is not None:
                        paths.append((nd.index, end_idx, chain))

    # Isolated cycles: no node pixel anywhere on them.  Deterministic anchor
    # at the lowest flat pixel index turns each into a self-loop.
    leftovers = (mask == 1) & ~consumed
    for nd in nodes:
        for p in nd.pixels:
            leftovers[p] = False
    for row, col in np.argwhere(leftovers):
        if not leftovers[row, col]:
            continue
        anchor = (int(row), int(col))
        idx = len(all_nodes)
        all_nodes.append(PixelNode(index=idx, pixels=(anchor,), is_junction=False))
        node_at[anchor] = idx
        nbrs = [
            (anchor[0] + dy, anchor[1] + dx)
            for dy, dx in _NBHD
            if 0 <= anchor[0] + dy < h and 0 <= anchor[1] + dx < w and mask[anchor[0] + dy, anchor[1] + dx]
        ]
        if not nbrs:
            leftovers[anchor] = False
            continue
        end_idx, chain = walk(idx, anchor, nbrs[0])
        if end_idx is not None:
            paths.append((idx, end_idx, chain))
        for py, px in chain:
            leftovers[py, px] = False

    import logging

    stray = int(leftovers.sum())
    if stray:
        logging.getLogger(__name__).warning("trace_edges: %d stray skeleton pixels dropped", stray)
    return paths, all_nodes


def _perp_dist(pt: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    d = b - a
    l2 = float(d @ d)
    if l2 == 0.0:
        return float(np.hypot(*(pt - a)))
    t = float((pt - a) @ d) / l2
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(pt - (a + t * d))))


def simplify_polyline(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Douglas-Peucker: maximum deviation from the input stays <= tolerance."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) <= 2 or tolerance <= 0:
        return pts.copy()
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        seg = pts[i + 1 : j]
        dists = [_perp_dist(p, pts[i], pts[j]) for p in seg]
        k = int(np.argmax(dists))
        if dists[k] > tolerance:
            k += i + 1
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return pts[keep]


def build_graph(
    paths: Sequence[tuple[int, int, list[tuple[int, int]]]],
    nodes: Sequence[PixelNode],
    grid: Skeleton,
    simplify_tolerance_m: float = 0.3,
) -> TopoGraph:
    """World-space directed graph; every traced path yields two twin edges."""
    g = TopoGraph()
    positions = {}
    for nd in nodes:
        crow, ccol = nd.centroid
        x, y = grid.pixel_to_world(ccol, crow)
        positions[nd.index] = (float(x), float(y))
        g.nodes[nd.index] = Node(nd.index, float(x), float(y))

    eid = 0
    min_loop_m = 2.0  # junction clumps shed meaningless pixel-scale self-loops
    for from_idx, to_idx, chain in paths:
        interior = chain[1:-1]
        coords = [positions[from_idx]]
        for row, col in interior:
            x, y = grid.pixel_to_world(col, row)
            coords.append((float(x), float(y)))
        coords.append(positions[to_idx])
        poly = simplify_polyline(np.asarray(coords), simplify_tolerance_m)
        length = polyline_length(poly)
        if from_idx == to_idx and length < min_loop_m:
            continue
        fwd = Edge(eid, from_idx, to_idx, poly, length, twin_id=eid + 1)
        rev = Edge(eid + 1, to_idx, from_idx, poly[::-1].copy(), length, twin_id=eid)
        g.edges[fwd.id] = fwd
        g.edges[rev.id] = rev
        eid += 2
    return g


def extract_graph(skel: Skeleton, simplify_tolerance_m: float = 0.3) -> TopoGraph:
    """detect_nodes + trace_edges + build_graph in one call."""
    nodes = detect_nodes(skel)
    paths, all_nodes = trace_edges(skel, nodes)
    return build_graph(paths, all_nodes, skel, simplify_tolerance_m)

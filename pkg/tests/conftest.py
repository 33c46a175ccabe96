import numpy as np
import pytest

from traj_atlas.behavior import BehaviorMap, EdgePrototype, TransitionTable, VelocityCluster
from traj_atlas.core import Trajectory, derive_kinematics
from traj_atlas.graph import Edge, Node, NodeKind, TopoGraph


def make_traj(points, traj_id="t", dt=0.1, kinematics=True):
    """Trajectory from an (n, 2) array sampled at a fixed rate."""
    pts = np.asarray(points, dtype=np.float64)
    t = dt * np.arange(len(pts))
    traj = Trajectory(traj_id, t, pts[:, 0], pts[:, 1])
    return derive_kinematics(traj) if kinematics else traj


def straight_traj(start, heading_rad, speed, duration_s, dt=0.1, traj_id="t"):
    n = int(round(duration_s / dt)) + 1
    t = dt * np.arange(n)
    x = start[0] + speed * np.cos(heading_rad) * t
    y = start[1] + speed * np.sin(heading_rad) * t
    return derive_kinematics(Trajectory(traj_id, t, x, y))


@pytest.fixture
def t_junction_map():
    """Hand-built behavior map: straight road with one fork.

    Edge 0 runs A->B along y=0; at decision node B the road continues
    straight (edge 1, to C) or turns left (edge 2, up to D).  Transition
    counts are chosen so a slow cluster prefers the turn (8/10) and a fast
    cluster the straight continuation (8/10).
    """
    g = TopoGraph()
    g.nodes[0] = Node(0, 0.0, 0.0, NodeKind.START)
    g.nodes[1] = Node(1, 20.0, 0.0, NodeKind.DECISION)
    g.nodes[2] = Node(2, 40.0, 0.0, NodeKind.END)
    g.nodes[3] = Node(3, 20.0, 20.0, NodeKind.END)
    e0 = np.array([[0.0, 0.0], [20.0, 0.0]])
    e1 = np.array([[20.0, 0.0], [40.0, 0.0]])
    e2 = np.array([[20.0, 0.0], [20.0, 20.0]])
    g.edges[0] = Edge(0, 0, 1, e0, 20.0, traversal_count=20)
    g.edges[1] = Edge(1, 1, 2, e1, 20.0, traversal_count=10)
    g.edges[2] = Edge(2, 1, 3, e2, 20.0, traversal_count=10)

    slow = VelocityCluster(0, 5.0, tuple(f"s{i}" for i in range(10)))
    fast = VelocityCluster(1, 10.0, tuple(f"f{i}" for i in range(10)))
    table = TransitionTable(1, [slow, fast], [{2: 8, 1: 2}, {2: 2, 1: 8}])

    def proto(points, speed):
        pts = np.asarray(points, dtype=np.float64)
        return EdgePrototype(speed, 5, pts, np.full(len(pts), float(speed)))

    step = np.linspace(0, 20, 21)
    prototypes = {
        0: [proto(np.column_stack([step, np.zeros_like(step)]), 5.0),
            proto(np.column_stack([step, np.zeros_like(step)]), 10.0)],
        1: [proto(np.column_stack([20.0 + step, np.zeros_like(step)]), 5.0),
            proto(np.column_stack([20.0 + step, np.zeros_like(step)]), 10.0)],
        2: [proto(np.column_stack([np.full_like(step, 20.0), step]), 5.0),
            proto(np.column_stack([np.full_like(step, 20.0), step]), 10.0)],
    }
    continuations = {(0, 1): 10, (0, 2): 10}
    return BehaviorMap(g, {1: table}, prototypes, continuations)

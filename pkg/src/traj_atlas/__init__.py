"""Lane-accurate behavior maps from vehicle trajectories, and predictions on top of them.

The pipeline turns raw timestamped 2-D trajectories into a directed
topological graph of the observed road structure, attaches velocity-dependent
maneuver statistics and prototype trajectories to it, and uses the result to
produce probabilistic multi-hypothesis motion predictions.  A constant
yaw-rate-and-acceleration baseline and an evaluation harness are included.
"""

from traj_atlas.core import Trajectory, TrajectoryPoint, VehicleState
from traj_atlas.graph import Edge, Node, NodeKind, TopoGraph

__version__ = "0.1.0"

__all__ = [
    "Trajectory",
    "TrajectoryPoint",
    "VehicleState",
    "TopoGraph",
    "Node",
    "Edge",
    "NodeKind",
    "__version__",
]

"""End-to-end map construction: trajectories in, behavior map out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from traj_atlas import matching, raster
from traj_atlas.behavior import BehaviorMap, build_behavior_map
from traj_atlas.config import PipelineConfig
from traj_atlas.core import Trajectory, ValidationError, derive_kinematics, split_and_trim
from traj_atlas.graph import extract_graph

log = logging.getLogger(__name__)


@dataclass
class BuildDiagnostics:
    input_count: int = 0
    prepared_count: int = 0
    unmatched_count: int = 0
    edges_before_pruning: int = 0
    edges_after_pruning: int = 0
    node_kinds: dict = field(default_factory=dict)


def prepare_trajectories(trajs: list[Trajectory], cfg: PipelineConfig) -> list[Trajectory]:
    """Split at tracking gaps, drop short fragments, derive kinematics."""
    out = []
    for traj in trajs:
        for seg in split_and_trim(traj, cfg.split_min_length_m, cfg.split_max_gap_s):
            out.append(derive_kinematics(seg))
    return out


def build_map(
    trajs: list[Trajectory], cfg: PipelineConfig, threads: int | None = None
) -> tuple[BehaviorMap, BuildDiagnostics]:
    """Raster -> skeleton -> graph -> match -> classify -> tables/prototypes."""
    if not trajs:
        raise ValidationError("no trajectories")
    diag = BuildDiagnostics(input_count=len(trajs))
    prepared = prepare_trajectories(trajs, cfg)
    if not prepared:
        raise ValidationError("no trajectories left after split/trim")
    diag.prepared_count = len(prepared)

    grid = raster.rasterize(prepared, cfg.resolution_m_per_px, margin_m=cfg.grid_margin_m)
    grid = raster.morphological_denoise(grid, cfg.morph_passes())
    binary = raster.binarize(grid, cfg.binarize_threshold)
    skeleton = raster.prune_spurs(raster.thin(binary), cfg.max_spur_px)

    g = extract_graph(skeleton, cfg.simplify_tolerance_m)
    diag.edges_before_pruning = len(g.edges)

    matches = matching.match_all(
        prepared,
        g,
        max_snap_m=cfg.max_snap_m,
        gap_tolerance=cfg.gap_tolerance,
        threads=threads or cfg.threads,
        densify_step_m=cfg.densify_step_m,
        swap_support=cfg.swap_support,
        min_alignment=cfg.min_alignment,
        tie_slack_m=cfg.tie_slack_m,
    )
    diag.unmatched_count = sum(m.unmatched for m in matches)

    pruned = matching.prune_unused_edges(g, matches)
    cont = matching.continuation_counts(matches)
    pruned = matching.classify_nodes(pruned, cont)
    diag.edges_after_pruning = len(pruned.edges)
    for node in pruned.nodes.values():
        diag.node_kinds[node.kind.name] = diag.node_kinds.get(node.kind.name, 0) + 1
    if diag.unmatched_count:
        log.info("build_map: %d/%d trajectories unmatched", diag.unmatched_count, len(prepared))

    bmap = build_behavior_map(
        prepared,
        pruned,
        matches,
        lookback_m=cfg.lookback_m,
        max_snap_m=cfg.max_snap_m,
        eps=cfg.cluster_eps_mps,
        min_pts=cfg.cluster_min_pts,
        merge_gap=cfg.cluster_merge_gap_mps,
        min_lns=cfg.proto_min_lns,
        proto_step_m=cfg.proto_step_m,
    )
    return bmap, diag

"""Command-line interface.

Subcommands: ``build-map``, ``predict``, ``evaluate``, ``synth``.  Every run
is driven by a JSON config file; individual keys can be overridden with
``--set key=value`` (flags win).  Log level comes from ``TRAJ_ATLAS_LOG``.

Exit codes: 0 success, 2 usage/config error, 3 input validation or parse
error, 4 partial failure (some predictions off-map), 1 unexpected error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from traj_atlas import __version__
from traj_atlas.behavior import BehaviorMap
from traj_atlas.config import PipelineConfig
from traj_atlas.core import ParseError, ValidationError, derive_kinematics, load_trajectories, save_trajectories
from traj_atlas.scenario import ScenarioConfig, generate_scenario, load_scenario_config

log = logging.getLogger("traj_atlas")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PARTIAL = 4


def _setup_logging():
    level = os.environ.get("TRAJ_ATLAS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _load_config(path: str | None, overrides: list[str]) -> PipelineConfig:
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.override(key.strip(), raw.strip())
    return cfg


def cmd_build_map(args) -> int:
    from traj_atlas.pipeline import build_map

    cfg = _load_config(args.config, args.set)
    trajs = load_trajectories(args.trajectories)
    if not trajs:
        raise ValidationError("no trajectories")
    bmap, diag = build_map(trajs, cfg, threads=args.threads)
    bmap.save(args.out)
    log.info(
        "build-map: %d trajectories -> %d nodes, %d edges (%d pruned), %d unmatched",
        diag.prepared_count,
        len(bmap.graph.nodes),
        diag.edges_after_pruning,
        diag.edges_before_pruning - diag.edges_after_pruning,
        diag.unmatched_count,
    )
    print(
        f"wrote {args.out}: {len(bmap.graph.nodes)} nodes, {len(bmap.graph.edges)} edges, "
        f"{len(bmap.tables)} decision tables, {diag.unmatched_count} unmatched"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    from traj_atlas.matching import EdgeIndex
    from traj_atlas.predict import predict

    cfg = _load_config(args.config, args.set)
    bmap = BehaviorMap.load(args.map)
    trajs = load_trajectories(args.observed)
    if not trajs:
        raise ValidationError("no observed trajectories")
    index = EdgeIndex(bmap.graph)
    outputs = {}
    any_off_map = False
    for traj in trajs:
        traj = derive_kinematics(traj)
        result = predict(
            traj,
            bmap,
            args.horizon_m,
            max_snap_m=cfg.max_snap_m,
            heading_weight=cfg.heading_weight,
            vm_window_s=cfg.vm_window_s,
            min_obs=cfg.enum_min_obs,
            min_branch_p=cfg.min_branch_probability,
            index=index,
        )
        if result.status != "ok":
            any_off_map = True
            log.warning("predict: trajectory %s is off-map", traj.id)
        outputs[traj.id] = result.to_json_list()
    payload = outputs[trajs[0].id] if len(trajs) == 1 else outputs
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    print(f"wrote {args.out}: {len(trajs)} trajectories predicted")
    return EXIT_PARTIAL if any_off_map else EXIT_OK


def cmd_evaluate(args) -> int:
    from traj_atlas.evaluation import emit_report, evaluate_split

    cfg = _load_config(args.config, args.set)
    trajs = load_trajectories(args.trajectories)
    report, diag = evaluate_split(trajs, cfg, no_split=args.no_split, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path, svg_path = emit_report(report, args.out_dir)
    print(f"wrote {csv_path} and {svg_path} ({report.meta['n_scored']} test cases)")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = load_scenario_config(args.config) if args.config else ScenarioConfig()
    if args.count is not None:
        cfg.count = args.count
    if args.seed is not None:
        cfg.seed = args.seed
    trajs = generate_scenario(cfg)
    save_trajectories(trajs, args.out)
    print(f"wrote {args.out}: {len(trajs)} trajectories (seed {cfg.seed})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="traj-atlas",
        description="Behavior-map construction and trajectory prediction from observed tracks.",
    )
    p.add_argument("--version", action="version", version=f"traj-atlas {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-map", help="build a behavior map from a trajectory CSV")
    b.add_argument("--trajectories", required=True)
    b.add_argument("--config", default=None)
    b.add_argument("--out", required=True)
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    b.set_defaults(func=cmd_build_map)

    pr = sub.add_parser("predict", help="predict hypotheses for observed trajectory prefixes")
    pr.add_argument("--map", required=True)
    pr.add_argument("--observed", required=True)
    pr.add_argument("--horizon-m", type=float, required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--config", default=None)
    pr.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="train/test evaluation against the CYRA baseline")
    ev.add_argument("--trajectories", required=True)
    ev.add_argument("--config", default=None)
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--no-split", action="store_true", help="evaluate in-sample (no 80/20 split)")
    ev.add_argument("--threads", type=int, default=None)
    ev.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ev.set_defaults(func=cmd_evaluate)

    sy = sub.add_parser("synth", help="generate a seeded synthetic intersection scenario")
    sy.add_argument("--config", default=None, help="scenario config JSON")
    sy.add_argument("--out", required=True)
    sy.add_argument("--count", type=int, default=None)
    sy.add_argument("--seed", type=int, default=None)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unexpected error")
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Distance-horizon evaluation of prediction methods against held-out data.

Each test trajectory is cut into an observed prefix and a ground-truth
remainder.  Predictions are resampled at the ground-truth timestamps, both
sides are truncated at each distance horizon, and the combined similarity
measure is aggregated per method and horizon (mean, median and quartiles).
The multi-hypothesis method scores the probability-weighted expectation of
its per-hypothesis errors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from traj_atlas.baseline import cyra_predict, estimate_cyra_state
from traj_atlas.behavior import BehaviorMap
from traj_atlas.config import PipelineConfig
from traj_atlas.core import Trajectory, ValidationError, derive_kinematics, resample_at_times, truncate_at_arc_length
from traj_atlas.matching import EdgeIndex
from traj_atlas.metrics import combined_measure
from traj_atlas.pipeline import BuildDiagnostics, build_map, prepare_trajectories
from traj_atlas.predict import predict

log = logging.getLogger(__name__)

METHODS = ("graph-top1", "graph-expected", "cyra")


@dataclass(frozen=True)
class EvalRow:
    method: str
    horizon_m: float
    n: int
    mean: float
    median: float
    p25: float
    p75: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def row(self, method: str, horizon_m: float) -> EvalRow:
        for r in self.rows:
            if r.method == method and r.horizon_m == horizon_m:
                return r
        raise KeyError((method, horizon_m))


@dataclass
class CaseResult:
    """Per-test-trajectory inputs to the aggregation, kept for the oracle tests."""

    trajectory_id: str
    errors: dict  # method -> {horizon: error}


def split_train_test(
    trajs: list[Trajectory], split_ratio: float, seed: int
) -> tuple[list[Trajectory], list[Trajectory]]:
    """Seeded permutation split; train and test ids never overlap."""
    order = np.random.default_rng(seed).permutation(len(trajs))
    n_train = int(round(len(trajs) * split_ratio))
    train = [trajs[i] for i in sorted(order[:n_train])]
    test = [trajs[i] for i in sorted(order[n_train:])]
    return train, test


def _prefix_index(traj: Trajectory, prefix_s: float) -> int | None:
    """Index of the evaluation start point: ``prefix_s`` seconds into the trajectory."""
    idx = np.nonzero(traj.t - traj.t[0] >= prefix_s)[0]
    if len(idx) == 0:
        return None
    i = int(idx[0])
    if i < 2 or i > len(traj) - 2:
        return None
    return i


def _resampled_error(pred: Trajectory, gt: Trajectory, weights: dict) -> float:
    pts = resample_at_times(pred, gt.t)
    aligned = Trajectory("aligned", gt.t.copy(), pts[:, 0], pts[:, 1])
    return combined_measure(aligned, gt, weights).combined


def evaluate_case(
    traj: Trajectory,
    bmap: BehaviorMap,
    cfg: PipelineConfig,
    horizons: list[float],
    index: EdgeIndex | None = None,
) -> CaseResult | None:
    """Errors per method and horizon for one test trajectory, or None if skipped.

    Skips (too short, off-map) apply to every method so the per-horizon
    sample counts stay comparable.
    """
    traj = traj if traj.speed is not None else derive_kinematics(traj)
    cut = _prefix_index(traj, cfg.eval_prefix_s)
    if cut is None:
        return None
    observed = traj.slice(0, cut + 1)
    gt = traj.slice(cut, len(traj))
    max_h = max(horizons)

    result = predict(
        observed,
        bmap,
        max_h,
        max_snap_m=cfg.max_snap_m,
        heading_weight=cfg.heading_weight,
        vm_window_s=cfg.vm_window_s,
        min_obs=cfg.enum_min_obs,
        min_branch_p=cfg.min_branch_probability,
        index=index,
    )
    if result.status != "ok" or not result.hypotheses:
        return None
    state = estimate_cyra_state(observed, cfg.cyra_fit_window_s)
    cyra = cyra_predict(state, max_h, t0=float(gt.t[0]), times=gt.t)

    errors: dict = {m: {} for m in METHODS}
    for h in horizons:
        gt_h = truncate_at_arc_length(gt, h)
        if gt_h.length_m() < h - 1e-6:
            continue  # trajectory too short for this horizon
        per_hyp = [_resampled_error(hyp.trajectory, gt_h, cfg.metric_weights) for hyp in result.hypotheses]
        probs = np.array([hyp.probability for hyp in result.hypotheses])
        probs = probs / probs.sum()
        errors["graph-top1"][h] = per_hyp[0]
        errors["graph-expected"][h] = float(np.dot(probs, per_hyp))
        errors["cyra"][h] = _resampled_error(cyra, gt_h, cfg.metric_weights)
    if not errors["graph-top1"]:
        return None
    return CaseResult(traj.id, errors)


def aggregate(cases: list[CaseResult], horizons: list[float], meta: dict | None = None) -> EvalReport:
    """Mean/median/quartile rows per method and horizon (linear-interpolated percentiles)."""
    report = EvalReport(meta=meta or {})
    for method in METHODS:
        for h in horizons:
            vals = np.array([c.errors[method][h] for c in cases if h in c.errors[method]])
            if len(vals) == 0:
                continue
            report.rows.append(
                EvalRow(
                    method=method,
                    horizon_m=float(h),
                    n=int(len(vals)),
                    mean=float(vals.mean()),
                    median=float(np.percentile(vals, 50)),
                    p25=float(np.percentile(vals, 25)),
                    p75=float(np.percentile(vals, 75)),
                )
            )
    return report


def evaluate_split(
    trajs: list[Trajectory],
    cfg: PipelineConfig,
    no_split: bool = False,
    threads: int | None = None,
) -> tuple[EvalReport, BuildDiagnostics]:
    """Build the map on the train split, score every predictor on the test split.

    ``no_split`` evaluates in-sample (map built on all data), matching the
    protocol a fixed observation area would allow.
    """
    prepared = prepare_trajectories(trajs, cfg)
    if len(prepared) < 2:
        raise ValidationError("not enough trajectories to evaluate")
    if no_split:
        train, test = prepared, prepared
    else:
        train, test = split_train_test(prepared, cfg.eval_split_ratio, cfg.seed)
    if not train or not test:
        raise ValidationError("split produced an empty train or test set")
    bmap, diag = build_map(train, cfg, threads=threads)
    horizons = [float(h) for h in cfg.horizons_m]
    index = EdgeIndex(bmap.graph)

    def one(traj):
        return evaluate_case(traj, bmap, cfg, horizons, index)

    n_threads = threads or cfg.threads
    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, test))
    else:
        results = [one(t) for t in test]
    cases = [c for c in results if c is not None]
    skipped = len(results) - len(cases)
    if skipped:
        log.info("evaluate: %d/%d test trajectories skipped", skipped, len(results))
    meta = {
        "n_train": len(train),
        "n_test": len(test),
        "n_scored": len(cases),
        "n_skipped": skipped,
        "no_split": no_split,
        "seed": cfg.seed,
    }
    return aggregate(cases, horizons, meta), diag


def write_report_csv(report: EvalReport, path) -> None:
    """CSV with full-precision floats; identical runs produce identical bytes."""
    if not report.rows:
        raise ValidationError("empty report")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,horizon_m,n,mean,median,p25,p75\n")
        for r in sorted(report.rows, key=lambda r: (r.method, r.horizon_m)):
            fh.write(
                f"{r.method},{r.horizon_m!r},{r.n},{r.mean!r},{r.median!r},{r.p25!r},{r.p75!r}\n"
            )


def read_report_csv(path) -> EvalReport:
    report = EvalReport()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "method,horizon_m,n,mean,median,p25,p75":
            raise ValidationError(f"unexpected report header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7:
                continue
            report.rows.append(
                EvalRow(
                    parts[0],
                    float(parts[1]),
                    int(parts[2]),
                    float(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                    float(parts[6]),
                )
            )
    return report


def write_comparison_svg(report: EvalReport, path) -> None:
    """Error-vs-horizon chart with interquartile bands, one line per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = {"graph-top1": "tab:blue", "graph-expected": "tab:red", "cyra": "tab:green"}
    for method in METHODS:
        rows = sorted((r for r in report.rows if r.method == method), key=lambda r: r.horizon_m)
        if not rows:
            continue
        hs = [r.horizon_m for r in rows]
        ax.plot(hs, [r.mean for r in rows], label=method, color=colors.get(method))
        ax.fill_between(
            hs,
            [r.p25 for r in rows],
            [r.p75 for r in rows],
            color=colors.get(method),
            alpha=0.18,
            linewidth=0,
        )
    ax.set_xlabel("prediction horizon [m]")
    ax.set_ylabel("combined error [m]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: EvalReport, out_dir) -> tuple[str, str]:
    """Write report.csv and comparison.svg into the directory."""
    import os

    csv_path = os.path.join(out_dir, "report.csv")
    svg_path = os.path.join(out_dir, "comparison.svg")
    write_report_csv(report, csv_path)
    write_comparison_svg(report, svg_path)
    return csv_path, svg_path

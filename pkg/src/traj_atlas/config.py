"""Pipeline configuration: one structured file, validated at load time."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict

from traj_atlas.core import ValidationError


@dataclass
class PipelineConfig:
    # raster stage
    resolution_m_per_px: float = 0.25
    morphology: list = field(default_factory=lambda: [["open", 1], ["close", 1], ["open", 2]])
    binarize_threshold: float = 2.0
    max_spur_px: int = 8
    grid_margin_m: float = 2.0
    # graph extraction
    simplify_tolerance_m: float = 0.3
    # trajectory preparation
    split_min_length_m: float = 4.0
    split_max_gap_s: float = 1.0
    # map matching
    max_snap_m: float = 3.0
    gap_tolerance: int = 10
    densify_step_m: float = 0.5
    swap_support: int = 8
    min_alignment: float = 0.3
    tie_slack_m: float = 1.0
    # behavior statistics
    lookback_m: float = 10.0
    cluster_eps_mps: float = 1.5
    cluster_min_pts: int = 3
    cluster_merge_gap_mps: float = 2.0
    proto_min_lns: int = 3
    proto_step_m: float = 1.0
    # prediction
    heading_weight: float = 1.0
    vm_window_s: float = 1.0
    enum_min_obs: int = 2
    min_branch_probability: float = 0.05
    # metrics & evaluation
    metric_weights: dict = field(
        default_factory=lambda: {"medt": 0.5, "medp": 0.5, "god": 0.0, "avd": 0.0}
    )
    horizons_m: list = field(default_factory=lambda: [4.0, 8.0, 12.0, 16.0, 20.0])
    eval_split_ratio: float = 0.8
    eval_prefix_s: float = 2.0
    cyra_fit_window_s: float = 1.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.resolution_m_per_px <= 0:
            raise ValidationError("resolution_m_per_px must be > 0")
        if self.binarize_threshold < 1:
            raise ValidationError("binarize_threshold must be >= 1")
        for item in self.morphology:
            op, radius = item[0], int(item[1])
            if op not in ("open", "close") or radius < 1:
                raise ValidationError(f"bad morphology pass {item!r}")
        if self.max_spur_px < 0:
            raise ValidationError("max_spur_px must be >= 0")
        if self.split_min_length_m <= 0:
            raise ValidationError("split_min_length_m must be > 0")
        if self.max_snap_m <= 0:
            raise ValidationError("max_snap_m must be > 0")
        if self.lookback_m <= 0:
            raise ValidationError("lookback_m must be > 0")
        if self.cluster_min_pts < 1 or self.proto_min_lns < 1:
            raise ValidationError("cluster_min_pts and proto_min_lns must be >= 1")
        if any(w < 0 for w in self.metric_weights.values()):
            raise ValidationError("metric weights must be >= 0")
        if not self.horizons_m or any(h <= 0 for h in self.horizons_m):
            raise ValidationError("horizons_m must be positive")
        if not 0 < self.eval_split_ratio < 1:
            raise ValidationError("eval_split_ratio must be in (0, 1)")
        if not 0 <= self.min_branch_probability < 1:
            raise ValidationError("min_branch_probability must be in [0, 1)")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")

    def morph_passes(self) -> list[tuple[str, int]]:
        return [(op, int(r)) for op, r in self.morphology]

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    def override(self, key: str, raw: str) -> None:
        """Apply one ``key=value`` command-line override (flags beat the file)."""
        known = {f.name: f for f in fields(self)}
        if key not in known:
            raise ValidationError(f"unknown config key {key!r}")
        current = getattr(self, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = json.loads(raw)
        setattr(self, key, value)
        self.__post_init__()

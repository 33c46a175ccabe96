"""Seeded synthetic intersection traffic for tests and evaluation.

A four-arm (configurable) intersection with right-hand lanes.  Vehicles pick
an approach arm and a maneuver from demand weights; turners cruise fast and
brake to their turn speed over a configurable zone before the corner, so
maneuver and approach speed are coupled the way the prediction model
assumes.  Everything is driven by one seeded generator: the same config and
seed reproduce the output bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from traj_atlas.core import Trajectory, ValidationError

MANEUVERS = ("straight", "right", "left")


@dataclass
class ScenarioConfig:
    n_arms: int = 4
    lane_offset_m: float = 1.75
    spawn_distance_m: tuple[float, float] = (28.0, 52.0)
    exit_length_m: float = 30.0
    right_turn_radius_m: float = 7.0
    left_turn_radius_m: float = 10.0
    demand: dict = field(
        default_factory=lambda: {"straight": 0.5, "right": 0.5, "left": 0.0}
    )
    straight_speed_mps: float = 13.0
    turn_speed_modes_mps: tuple[float, ...] = (5.6, 9.2)  # cautious / sporty turn styles
    speed_sigma_mps: float = 0.22
    decel_start_m: float = 24.0  # distance before the lane corner where braking begins
    decel_end_m: float = 11.0  # fully slowed from here on
    brake_exponent: float = 0.35  # <1 brakes hard first, then rolls to turn speed
    cautious_turn_fraction: float = 0.5  # turners that hold turn speed from the start
    lane_jitter_m: float = 0.30  # per-vehicle lateral offset (constant along the path)
    noise_sigma_m: float = 0.08  # per-sample position noise
    dt_s: float = 0.1
    count: int = 400
    seed: int = 0

    def __post_init__(self):
        weights = [self.demand.get(m, 0.0) for m in MANEUVERS]
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValidationError(f"demand weights must be >= 0 and not all zero: {self.demand}")
        if self.n_arms < 3:
            raise ValidationError("need at least 3 arms")
        if self.decel_end_m >= self.decel_start_m:
            raise ValidationError("decel_end_m must be smaller than decel_start_m")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["spawn_distance_m"] = list(self.spawn_distance_m)
        d["turn_speed_modes_mps"] = list(self.turn_speed_modes_mps)
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        for key in ("spawn_distance_m", "turn_speed_modes_mps"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _rot90cw(v: np.ndarray) -> np.ndarray:
    return np.array([v[1], -v[0]])


def _arm_dirs(cfg: ScenarioConfig, arm: int) -> tuple[np.ndarray, np.ndarray]:
    phi = 2.0 * math.pi * arm / cfg.n_arms
    u = np.array([math.cos(phi), math.sin(phi)])  # outbound direction of the arm
    return u, -u


def _maneuver_exit_arm(cfg: ScenarioConfig, arm: int, maneuver: str) -> int:
    half = cfg.n_arms // 2
    if maneuver == "straight":
        return (arm + half) % cfg.n_arms
    if maneuver == "right":
        return (arm + 1) % cfg.n_arms
    return (arm - 1) % cfg.n_arms


def _tangent_arc(p_corner, d_in, u_out, radius, step_m=0.25):
    """Circular arc tangent to both lane lines at the corner, sampled densely."""
    cos_beta = float(np.dot(-d_in, u_out))
    beta = math.acos(max(-1.0, min(1.0, cos_beta)))
    tan_half = math.tan(beta / 2.0)
    lt = radius / tan_half if tan_half > 1e-9 else 0.0
    t_in = p_corner - d_in * lt
    t_out = p_corner + u_out * lt
    sign = 1.0 if (d_in[0] * u_out[1] - d_in[1] * u_out[0]) > 0 else -1.0
    center = t_in - sign * _rot90cw(d_in) * radius
    a0 = math.atan2(t_in[1] - center[1], t_in[0] - center[0])
    sweep = sign * (math.pi - beta)
    n = max(2, int(math.ceil(abs(sweep) * radius / step_m)))
    angles = a0 + sweep * np.arange(n + 1) / n
    arc = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return t_in, t_out, arc


def _build_path(cfg: ScenarioConfig, arm: int, maneuver: str, spawn_m: float, lat: float):
    """Centerline polyline from spawn point to exit end, and the corner arc position."""
    offset = cfg.lane_offset_m + lat
    u_in, d_in = _arm_dirs(cfg, arm)
    r_in = _rot90cw(d_in) * offset
    exit_arm = _maneuver_exit_arm(cfg, arm, maneuver)
    u_out, _ = _arm_dirs(cfg, exit_arm)
    r_out = _rot90cw(u_out) * offset

    if maneuver == "straight":
        start = u_in * spawn_m + r_in
        end = u_out * cfg.exit_length_m + r_out
        pts = np.linspace(start, end, max(2, int(np.hypot(*(end - start)) / 0.25)))
        return pts, spawn_m

    radius = cfg.right_turn_radius_m if maneuver == "right" else cfg.left_turn_radius_m
    # corner where the two lane lines meet; solve A + s*d_in = B + r*u_out
    a = u_in * spawn_m + r_in
    b = u_out * cfg.exit_length_m + r_out
    denom = d_in[0] * u_out[1] - d_in[1] * u_out[0]
    if abs(denom) < 1e-12:
        raise ValidationError(f"degenerate turn geometry (arm {arm}, {maneuver})")
    s = ((b[0] - a[0]) * u_out[1] - (b[1] - a[1]) * u_out[0]) / denom
    p_corner = a + s * d_in
    t_in, t_out, arc = _tangent_arc(p_corner, d_in, u_out, radius)
    approach_len = float(np.hypot(*(t_in - a)))
    n_app = max(2, int(approach_len / 0.25))
    approach = np.linspace(a, t_in, n_app)
    exit_end = u_out * cfg.exit_length_m + r_out
    n_exit = max(2, int(np.hypot(*(exit_end - t_out)) / 0.25))
    exit_seg = np.linspace(t_out, exit_end, n_exit)
    pts = np.concatenate([approach, arc[1:], exit_seg[1:]], axis=0)
    corner_s = approach_len + float(np.hypot(*(p_corner - t_in)))
    return pts, corner_s


def _speed_profile(
    cfg: ScenarioConfig,
    maneuver: str,
    v_fast: float,
    v_turn: float,
    d_before: float,
    cautious: bool,
) -> float:
    if maneuver == "straight":
        return v_fast
    if cautious:
        return v_turn
    if d_before >= cfg.decel_start_m:
        return v_fast
    if d_before <= cfg.decel_end_m:
        return v_turn
    frac = (d_before - cfg.decel_end_m) / (cfg.decel_start_m - cfg.decel_end_m)
    return v_turn + (v_fast - v_turn) * frac ** cfg.brake_exponent


def maneuver_of(trajectory_id: str) -> str:
    """Maneuver label encoded in generated trajectory ids."""
    return trajectory_id.rsplit(":", 1)[-1]


def arm_of(trajectory_id: str) -> int:
    return int(trajectory_id.split(":")[1][1:])


def generate_scenario(cfg: ScenarioConfig) -> list[Trajectory]:
    """Deterministically sample ``cfg.count`` trajectories (seed-reproducible)."""
    rng = np.random.default_rng(cfg.seed)
    weights = np.array([max(cfg.demand.get(m, 0.0), 0.0) for m in MANEUVERS])
    weights = weights / weights.sum()
    out: list[Trajectory] = []
    for i in range(cfg.count):
        arm = int(rng.integers(cfg.n_arms))
        maneuver = MANEUVERS[int(rng.choice(len(MANEUVERS), p=weights))]
        spawn = float(rng.uniform(*cfg.spawn_distance_m))
        v_fast = float(rng.normal(cfg.straight_speed_mps, cfg.speed_sigma_mps))
        cautious = bool(rng.random() < cfg.cautious_turn_fraction)
        # cautious drivers crawl the whole approach and take the tight style;
        # the rest brake late and roll through at the brisk style
        mode = cfg.turn_speed_modes_mps[0] if cautious else cfg.turn_speed_modes_mps[-1]
        v_turn = float(rng.normal(mode, cfg.speed_sigma_mps))
        v_fast = max(v_fast, 2.0)
        v_turn = min(max(v_turn, 1.0), v_fast)
        lat = float(rng.normal(0.0, cfg.lane_jitter_m))

        pts, corner_s = _build_path(cfg, arm, maneuver, spawn, lat)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        s_grid = np.concatenate([[0.0], np.cumsum(seg)])
        total = float(s_grid[-1])

        s = 0.0
        stations = [0.0]
        while s < total:
            v = _speed_profile(cfg, maneuver, v_fast, v_turn, corner_s - s, cautious)
            s = s + v * cfg.dt_s
            if s >= total:
                break
            stations.append(s)
        if len(stations) < 2:
            continue
        stations = np.asarray(stations)
        xs = np.interp(stations, s_grid, pts[:, 0])
        ys = np.interp(stations, s_grid, pts[:, 1])
        noise = rng.normal(0.0, cfg.noise_sigma_m, size=(len(stations), 2))
        t = cfg.dt_s * np.arange(len(stations))
        out.append(
            Trajectory(
                id=f"v{i:04d}:a{arm}:{maneuver}",
                t=t,
                x=xs + noise[:, 0],
                y=ys + noise[:, 1],
            )
        )
    return out


def save_scenario_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=1)


def load_scenario_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ScenarioConfig.from_json_dict(json.load(fh))

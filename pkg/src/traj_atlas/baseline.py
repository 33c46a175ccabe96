"""Constant yaw-rate and acceleration (CYRA) baseline predictor."""

from __future__ import annotations

import math

import numpy as np

from traj_atlas.core import Trajectory, ValidationError, VehicleState, derive_kinematics


def estimate_cyra_state(observed: Trajectory, fit_window_s: float = 1.0) -> VehicleState:
    """Least-squares state estimate at the last timestamp.

    Segment speeds and headings (assigned to segment midpoints) are fitted
    linearly over the trailing window, which recovers acceleration and yaw
    rate exactly for constant-rate motion.  Needs at least three points in
    the window.
    """
    traj = observed if observed.speed is not None else derive_kinematics(observed)
    t_end = float(traj.t[-1])
    in_window = traj.t >= t_end - fit_window_s
    if int(in_window.sum()) < 3:
        raise ValidationError(
            f"CYRA fit needs >= 3 points within {fit_window_s} s, got {int(in_window.sum())}"
        )
    first = int(np.nonzero(in_window)[0][0])
    seg = slice(first, len(traj) - 1)  # segment i covers t[i]..t[i+1]
    mid_t = (traj.t[seg] + traj.t[first + 1 : len(traj)]) * 0.5
    speeds = traj.speed[seg]
    headings = np.unwrap(traj.heading[seg])

    def linear_fit(ts, vals):
        if len(ts) == 1:
            return float(vals[0]), 0.0
        slope, intercept = np.polyfit(ts, vals, 1)
        return float(intercept + slope * t_end), float(slope)

    v_end, accel = linear_fit(mid_t, speeds)
    theta_end, omega = linear_fit(mid_t, headings)
    theta_end = math.atan2(math.sin(theta_end), math.cos(theta_end))
    return VehicleState(
        x=float(traj.x[-1]),
        y=float(traj.y[-1]),
        heading=theta_end,
        speed=max(v_end, 0.0),
        yaw_rate=omega,
        acceleration=accel,
    )


def _ctra_step(x, y, theta, v, omega, a, dt):
    """Exact constant-yaw-rate, linear-speed step.  Returns new pose and arc length."""
    v1 = v + a * dt
    if abs(omega) < 1e-9:
        ds = v * dt + 0.5 * a * dt * dt
        return x + ds * math.cos(theta), y + ds * math.sin(theta), theta, v1, ds
    t1 = theta + omega * dt
    dx = ((v1) * math.sin(t1) - v * math.sin(theta)) / omega + a * (math.cos(t1) - math.cos(theta)) / (omega * omega)
    dy = (-(v1) * math.cos(t1) + v * math.cos(theta)) / omega + a * (math.sin(t1) - math.sin(theta)) / (omega * omega)
    ds = v * dt + 0.5 * a * dt * dt
    return x + dx, y + dy, t1, v1, ds


def cyra_predict(
    state: VehicleState,
    horizon_m: float,
    dt_s: float = 0.1,
    t0: float = 0.0,
    times: np.ndarray | None = None,
    max_time_s: float = 120.0,
) -> Trajectory:
    """Roll the CYRA model forward until the arc-length horizon.

    Uses the closed-form circular-arc solution per step, so step size does
    not affect accuracy.  Speed is floored at zero; once the vehicle stops
    with no positive acceleration the prediction ends.  ``times`` (absolute,
    first >= ``t0``) overrides the uniform ``dt_s`` grid so predictions can
    align with ground-truth timestamps.
    """
    if dt_s <= 0:
        raise ValidationError(f"dt_s must be > 0, got {dt_s}")
    if times is not None:
        grid = np.asarray(times, dtype=np.float64)
        grid = grid[grid > t0]
    else:
        n = max(2, int(math.ceil(max_time_s / dt_s)))
        grid = t0 + dt_s * np.arange(1, n + 1)
    xs = [state.x]
    ys = [state.y]
    ts = [t0]
    x, y, theta, v = state.x, state.y, state.heading, state.speed
    omega, a = state.yaw_rate, state.acceleration
    arc = 0.0
    prev_t = t0
    for tk in grid:
        dt = float(tk - prev_t)
        prev_t = float(tk)
        if v <= 0.0 and a <= 0.0:
            if len(ts) < 2:  # stationary output still needs two samples
                xs.append(x)
                ys.append(y)
                ts.append(float(tk))
            break
        if a < 0.0 and v + a * dt < 0.0:
            stop_dt = v / (-a)
            x, y, theta, v, ds = _ctra_step(x, y, theta, v, omega, a, stop_dt)
            v = 0.0
        else:
            x, y, theta, v, ds = _ctra_step(x, y, theta, v, omega, a, dt)
        arc += ds
        xs.append(x)
        ys.append(y)
        ts.append(float(tk))
        if arc >= horizon_m:
            break
    if len(ts) < 2:
        xs.append(x)
        ys.append(y)
        ts.append(prev_t + dt_s if times is None or len(grid) == 0 else float(grid[0]))
    return derive_kinematics(Trajectory("cyra", np.asarray(ts), np.asarray(xs), np.asarray(ys)))

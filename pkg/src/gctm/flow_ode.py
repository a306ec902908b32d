"""Flow-ODE machinery: velocity from a posterior mean, the boundary-exact
jump wrapper, grid-locked Euler/Heun integration, and the change of
variables tying the noise-scale ODE to the unit-interval flow ODE.
"""

from dataclasses import dataclass

import numpy as np


def velocity(x, t, field):
    """Flow velocity (x - E[x0|x,t]) / t; singular at t = 0 by construction.

    Callers reach t = 0 through the jump wrapper, never through velocity.
    """
    if t <= 0.0:
        raise ValueError("velocity is singular at t = 0")
    return (x - field.posterior_mean(x, t)) / t


def pfode_velocity(x, t, diffusion_posterior_mean):
    """Noise-scale ODE velocity (x - E[x0|x,t]) / t under the N(x0, t^2 I) kernel."""
    if t <= 0.0:
        raise ValueError("velocity is singular at t = 0")
    return (x - diffusion_posterior_mean(x, t)) / t


def solution_jump(x, t, s, anchor_value):
    """Boundary-exact wrapper (s/t) x + (1 - s/t) anchor.

    Exact identity at s = t for any anchor; equal to the anchor at s = 0.
    Accepts scalar or per-row t, s.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    s_arr = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],))
    if np.any(t_arr <= 0.0):
        raise ValueError("jump wrapper needs t > 0")
    if np.any(s_arr > t_arr) or np.any(s_arr < 0.0):
        raise ValueError("jump wrapper needs 0 <= s <= t")
    ratio = (s_arr / t_arr)[:, None]
    return ratio * x + (1.0 - ratio) * np.asarray(anchor_value, dtype=np.float64)


def heun_step(x, t_from, t_to, field):
    """One trapezoidal step; both endpoint times must be positive."""
    h = t_to - t_from
    v1 = velocity(x, t_from, field)
    v2 = velocity(x + h * v1, t_to, field)
    return x + 0.5 * h * (v1 + v2)


def euler_step(x, t_from, t_to, field):
    return x + (t_to - t_from) * velocity(x, t_from, field)


def integrate_times(x, times, field, solver="heun", keep_path=False):
    """Integrate through an explicit decreasing time array.

    A final time of exactly 0 is reached via the posterior mean at the last
    positive time (the anchor limit), which equals an exact Euler step into
    zero and avoids the velocity singularity.
    """
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) >= 0):
        raise ValueError("times must decrease strictly")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    step = heun_step if solver == "heun" else euler_step
    if solver not in ("heun", "euler"):
        raise ValueError(f"unknown solver {solver!r}")
    path = [x]
    for t_from, t_to in zip(times[:-1], times[1:]):
        if t_to == 0.0:
            x = field.posterior_mean(x, t_from)
        else:
            x = step(x, t_from, t_to, field)
        if keep_path:
            path.append(x)
    return np.stack(path) if keep_path else x


@dataclass(frozen=True)
class TraversalRequest:
    """Grid-locked integration order: move x from t_from down to t_to."""

    x: np.ndarray
    t_from: float
    t_to: float
    grid: "object"
    solver: str = "heun"


def _snap_index(grid_t, value):
    idx = int(np.argmin(np.abs(grid_t - value)))
    if abs(grid_t[idx] - value) > 1e-9:
        raise ValueError(f"time {value} is not on the grid")
    return idx


def integrate(req, field):
    """Integrate a TraversalRequest through consecutive grid points."""
    i_from = _snap_index(req.grid.t, req.t_from)
    i_to = _snap_index(req.grid.t, req.t_to)
    if i_from < i_to:
        raise ValueError("integration runs backward: need t_from >= t_to")
    if i_from == i_to:
        return np.atleast_2d(np.asarray(req.x, dtype=np.float64))
    times = req.grid.t[i_to : i_from + 1][::-1]
    return integrate_times(req.x, times, field, solver=req.solver)


def ctm_to_gctm(x, t):
    """Change of variables from noise-scale coordinates to flow coordinates:
    t' = t / (1 + t), xbar = x / (1 + t)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0):
        raise ValueError("noise scale must be positive")
    return np.asarray(x, dtype=np.float64) / (1.0 + t), t / (1.0 + t)


def gctm_to_ctm(xbar, t_prime):
    """Inverse change of variables; rejects t' >= 1 (infinite noise scale)."""
    tp = np.asarray(t_prime, dtype=np.float64)
    if np.any(tp >= 1.0) or np.any(tp < 0.0):
        raise ValueError("flow time must lie in [0, 1)")
    t = tp / (1.0 - tp)
    return np.asarray(xbar, dtype=np.float64) * (1.0 + t), t

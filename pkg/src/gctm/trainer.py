"""Teacher-free training loop: regression loss on the anchor limit, the
trajectory-consistency loss with an EMA-integrated target, grid doubling,
and deterministic per-iteration randomness.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .backend import kern
from .couplings import Independent, draw_pair_batch
from .nn import NonFiniteError, _assemble_input, _backward_views, _forward_views, layer_views
from .schedule import (
    DEFAULT_RHO,
    DEFAULT_SIGMA_MAX,
    DEFAULT_SIGMA_MIN,
    edm_time_grid,
    n_at_iteration,
    sample_that,
    sample_triplets,
)


@dataclass(frozen=True)
class TrainConfig:
    total_iters: int = 20_000
    batch_size: int = 128
    lambda_fm: float = 0.1
    coupling: object = field(default_factory=Independent)
    sigma_min: float = DEFAULT_SIGMA_MIN
    sigma_max: float = DEFAULT_SIGMA_MAX
    rho: float = DEFAULT_RHO
    n_start: int = 4
    doublings: int = 4
    that_mode: str = "unconditional"
    seed: int = 0
    eval_every: int = 0
    eval_samples: int = 2048
    checkpoint_every: int = 0
    hidden: tuple = (256, 256, 256)
    lr: Optional[float] = None
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.batch_size < 2 and not isinstance(self.coupling, Independent):
            raise ValueError("non-independent couplings need batch size >= 2")


@dataclass
class Problem:
    """Data interface the loop trains against."""

    dim: int
    sample_data: Callable
    sample_prior: Callable


@dataclass(frozen=True)
class LossReport:
    iteration: int
    gctm_loss: float
    fm_loss: float
    total: float
    grid_n: int
    wallclock: float = 0.0


@dataclass
class TrainState:
    params: nn.ParamStore
    opt: nn.OptimizerState
    config: TrainConfig
    problem: Problem
    iteration: int = 0


def init_state(config, problem):
    params = nn.init_params(
        problem.dim, hidden=config.hidden, ema_decay=config.ema_decay, seed=config.seed
    )
    opt = nn.init_optimizer(params, batch_size=config.batch_size, lr=config.lr)
    return TrainState(params, opt, config, problem)


def _net(views, embedding, x, t, s, want_cache=False):
    h = _assemble_input(x, t, s, embedding)
    y, cache = _forward_views(views, h)
    return (y, cache) if want_cache else y


def _fm_terms(views, embedding, batch, that):
    """Anchor-limit regression: loss, output cotangent, cache."""
    m = batch.batch_size
    x_that = kern.lerp_rows(batch.x0, batch.x1, np.ascontiguousarray(that))
    pred, cache = _net(views, embedding, x_that, that, that, want_cache=True)
    diff = pred - batch.x0
    loss = float(np.einsum("ij,ij->", diff, diff) / m)
    return loss, 2.0 * diff / m, cache


def fm_loss(params, batch, that_batch):
    """Mean squared anchor-limit regression ||x0 - g(x_th, th, th)||^2.

    Returns (loss, flat gradient).
    """
    that = np.asarray(that_batch, dtype=np.float64)
    views = layer_views(params.layer_dims, params.weights)
    loss, dpred, cache = _fm_terms(views, params.embedding, batch, that)
    grad, _ = _backward_views(views, cache, dpred)
    return loss, grad


def _ema_hop(views_ema, embedding, x_t, t, u):
    """Trapezoidal move t -> u with the EMA anchor limit as velocity.

    Rows with u == 0 take the exact anchor hop (posterior-mean limit)
    instead of evaluating the singular velocity.
    """
    pm_t = _net(views_ema, embedding, x_t, t, t)
    v1 = (x_t - pm_t) / t[:, None]
    h = (u - t)[:, None]
    x_e = x_t + h * v1
    u_pos = u > 0.0
    u_safe = np.where(u_pos, u, t)
    pm_u = _net(views_ema, embedding, x_e, u_safe, u_safe)
    v2 = (x_e - pm_u) / np.where(u_pos, u, 1.0)[:, None]
    x_tu = x_t + 0.5 * h * (v1 + v2)
    if not np.all(u_pos):
        x_tu[~u_pos] = pm_t[~u_pos]
    return x_tu


def _gctm_target(views_sg, views_ema, embedding, batch, t, u, s):
    """Stop-gradient target: EMA hop t -> u, then one severed jump u -> s."""
    x_t = kern.lerp_rows(batch.x0, batch.x1, np.ascontiguousarray(t))
    x_tu = _ema_hop(views_ema, embedding, x_t, t, u)
    tgt = np.empty_like(x_tu)
    trivial = s == u
    tgt[trivial] = x_tu[trivial]
    live = ~trivial
    if np.any(live):
        g_sg = _net(views_sg, embedding, x_tu[live], u[live], s[live])
        ratio = (s[live] / u[live])[:, None]
        tgt[live] = ratio * x_tu[live] + (1.0 - ratio) * g_sg
    return x_t, tgt


def _gctm_terms(views_live, views_ema, embedding, dim, batch, t, u, s):
    """Consistency loss, output cotangent for the live anchor, cache."""
    m = batch.batch_size
    x_t, tgt = _gctm_target(views_live, views_ema, embedding, batch, t, u, s)
    g_pred, cache = _net(views_live, embedding, x_t, t, s, want_cache=True)
    ratio = (s / t)[:, None]
    pred = ratio * x_t + (1.0 - ratio) * g_pred
    c = 0.00054 * np.sqrt(float(dim))
    diff = pred - tgt
    sq = np.einsum("ij,ij->i", diff, diff)
    root = np.sqrt(sq + c * c)
    loss = float(np.mean(root - c))
    dpred = diff / root[:, None] / m
    return loss, (1.0 - ratio) * dpred, cache, x_t


def gctm_loss(params, batch, triplet_batch):
    """Trajectory-consistency loss over (t, u, s) rows.

    The target integrates t -> u with the EMA anchor as velocity and jumps
    u -> s through the current network with gradients severed; the gradient
    flows only through the live prediction. Returns (loss, flat gradient).
    """
    t, u, s = (np.asarray(v, dtype=np.float64) for v in triplet_batch)
    views_live = layer_views(params.layer_dims, params.weights)
    views_ema = layer_views(params.layer_dims, params.ema_weights)
    loss, dg, cache, _ = _gctm_terms(
        views_live, views_ema, params.embedding, params.data_dim, batch, t, u, s
    )
    grad, _ = _backward_views(views_live, cache, dg)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite consistency loss")
    return loss, grad


def step_rng(seed, iteration, lane=0):
    """Deterministic per-iteration stream, independent of loop history."""
    return np.random.default_rng((int(seed), int(iteration), int(lane)))


def train_step(state, config=None):
    """One coupled draw, both losses, one Adam update, one EMA refresh."""
    cfg = state.config if config is None else config
    it = state.iteration
    rng = step_rng(cfg.seed, it)
    m = cfg.batch_size
    grid = edm_time_grid(
        n_at_iteration(it, cfg.total_iters, cfg.n_start, cfg.doublings),
        cfg.sigma_min,
        cfg.sigma_max,
        cfg.rho,
    )
    t0 = time.perf_counter()
    batch = draw_pair_batch(
        cfg.coupling, state.problem.sample_data, state.problem.sample_prior, m, rng
    )
    that = sample_that(cfg.that_mode, rng, size=m)
    t, u, s = sample_triplets(grid, m, rng)

    p = state.params
    views_live = layer_views(p.layer_dims, p.weights)
    views_ema = layer_views(p.layer_dims, p.ema_weights)
    fm_l, fm_dpred, fm_cache = _fm_terms(views_live, p.embedding, batch, that)
    g_l, g_dg, g_cache, _ = _gctm_terms(
        views_live, views_ema, p.embedding, p.data_dim, batch, t, u, s
    )
    if not (np.isfinite(fm_l) and np.isfinite(g_l)):
        raise NonFiniteError(f"non-finite loss at iteration {it}")
    fm_grad, _ = _backward_views(views_live, fm_cache, fm_dpred)
    g_grad, _ = _backward_views(views_live, g_cache, g_dg)

    nn.adam_step(p, state.opt, g_grad + cfg.lambda_fm * fm_grad)
    nn.ema_update(p)
    state.iteration = it + 1
    return LossReport(
        iteration=it,
        gctm_loss=g_l,
        fm_loss=fm_l,
        total=g_l + cfg.lambda_fm * fm_l,
        grid_n=grid.N,
        wallclock=time.perf_counter() - t0,
    )


def eval_energy_distance(state, iteration):
    """Energy distance of one-step EMA samples against fresh data."""
    from .inference import one_step_sample
    from .metrics import energy_distance
    from .model import TrajectoryModel

    cfg = state.config
    rng = step_rng(cfg.seed, iteration, lane=1)
    x1 = state.problem.sample_prior(cfg.eval_samples, rng)
    data = state.problem.sample_data(cfg.eval_samples, rng)
    samples = one_step_sample(TrajectoryModel(state.params), x1)
    return float(energy_distance(samples, data))


def train_loop(config, problem, out_dir=None, log_every=1, progress=None):
    """Run the full schedule; returns (final params, list of LossReports).

    With ``out_dir`` set, writes ``metrics.csv`` rows
    iter,gctm_loss,fm_loss,total,N,metric_name,metric_value (the metric
    columns fill on eval iterations) and rolling/final checkpoints.
    """
    from . import checkpoint as ckpt

    state = init_state(config, problem)
    reports = []
    writer = None
    fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "metrics.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["iter", "gctm_loss", "fm_loss", "total", "N", "metric_name", "metric_value"])
    try:
        for it in range(config.total_iters):
            report = train_step(state)
            reports.append(report)
            metric_name, metric_value = "", ""
            if config.eval_every and (it + 1) % config.eval_every == 0:
                metric_name = "energy_distance"
                metric_value = f"{eval_energy_distance(state, it + 1):.10e}"
            if writer is not None and (it % log_every == 0 or metric_name):
                writer.writerow(
                    [
                        report.iteration,
                        f"{report.gctm_loss:.10e}",
                        f"{report.fm_loss:.10e}",
                        f"{report.total:.10e}",
                        report.grid_n,
                        metric_name,
                        metric_value,
                    ]
                )
            if (
                out_dir is not None
                and config.checkpoint_every
                and (it + 1) % config.checkpoint_every == 0
            ):
                ckpt.save_checkpoint(out_dir / "model.ckpt", state.params, _ckpt_meta(config, problem))
            if progress is not None:
                progress(report)
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        ckpt.save_checkpoint(out_dir / "model.ckpt", state.params, _ckpt_meta(config, problem))
    return state.params, reports


def _ckpt_meta(config, problem):
    from .config import coupling_to_keys

    meta = {
        "dim": problem.dim,
        "sigma_min": config.sigma_min,
        "sigma_max": config.sigma_max,
        "rho": config.rho,
        "N_start": config.n_start,
        "doublings": config.doublings,
        "that_mode": config.that_mode,
        "seed": config.seed,
    }
    meta.update(coupling_to_keys(config.coupling))
    return meta

"""Endpoint-pair sampling under the three couplings (independent, entropic
optimal transport, supervised corruption) plus the small Gaussian
perturbation of the x1 side.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backend import kern

DEFAULT_PERTURB_SCALE = 0.05
DEFAULT_TAU_REL = 0.05
SINKHORN_TOL = 1e-6
SINKHORN_MAX_ITER = 10_000


@dataclass(frozen=True)
class PairBatch:
    """Aligned endpoint rows (x0[m], x1[m]) drawn from a joint coupling."""

    x0: np.ndarray
    x1: np.ndarray

    def __post_init__(self):
        if self.x0.shape != self.x1.shape or self.x0.ndim != 2:
            raise ValueError("x0/x1 must be matching (M, d) arrays")
        if not (np.all(np.isfinite(self.x0)) and np.all(np.isfinite(self.x1))):
            raise ValueError("pair batch contains non-finite values")

    @property
    def batch_size(self):
        return self.x0.shape[0]


@dataclass(frozen=True)
class CorruptionOperator:
    """Observation operator H mapping clean points to measurements.

    kind 'identity'; 'coordinate_mask' writes 0 into ``mask_indices``;
    'linear' applies a fixed (d, d) matrix plus optional Gaussian noise of
    scale ``noise_sigma`` drawn fresh per row.
    """

    kind: str = "identity"
    mask_indices: tuple = ()
    matrix: Optional[np.ndarray] = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("identity", "coordinate_mask", "linear"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "linear":
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("linear operator needs a square (d, d) matrix")
            object.__setattr__(self, "matrix", m)

    def validate_dim(self, d):
        if self.kind == "coordinate_mask" and any(i < 0 or i >= d for i in self.mask_indices):
            raise ValueError("mask indices out of range")
        if self.kind == "linear" and self.matrix.shape[1] != d:
            raise ValueError("operator matrix does not match the data dimension")

    @property
    def is_mask(self):
        return self.kind == "coordinate_mask"

    def apply_deterministic(self, x):
        """The noise-free part of H; also the map differentiated in guidance."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.validate_dim(x.shape[1])
        if self.kind == "identity":
            return x.copy()
        if self.kind == "coordinate_mask":
            out = x.copy()
            out[:, list(self.mask_indices)] = 0.0
            return out
        return x @ self.matrix.T

    def apply(self, x, rng=None):
        """Draw H fresh per row and apply it."""
        out = self.apply_deterministic(x)
        if self.kind == "linear" and self.noise_sigma > 0.0:
            if rng is None:
                rng = np.random.default_rng(self.seed)
            out += self.noise_sigma * rng.standard_normal(out.shape)
        return out

    def adjoint(self, r):
        """H^T r for the deterministic part."""
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        if self.kind == "identity":
            return r.copy()
        if self.kind == "coordinate_mask":
            out = r.copy()
            out[:, list(self.mask_indices)] = 0.0
            return out
        return r @ self.matrix


@dataclass(frozen=True)
class Independent:
    """No assumed relation between the endpoints."""

    perturb_scale: float = DEFAULT_PERTURB_SCALE


@dataclass(frozen=True)
class EntropicOT:
    """Entropy-regularized optimal transport pairing within each batch.

    tau_abs overrides the cost-relative default tau = tau_rel * mean(C).
    """

    tau_rel: float = DEFAULT_TAU_REL
    tau_abs: Optional[float] = None
    perturb_scale: float = DEFAULT_PERTURB_SCALE

    def __post_init__(self):
        if self.tau_abs is not None and self.tau_abs <= 0:
            raise ValueError("tau must be positive")
        if self.tau_abs is None and self.tau_rel <= 0:
            raise ValueError("tau_rel must be positive")


@dataclass(frozen=True)
class Supervised:
    """x1 = H x0 with H drawn fresh per row."""

    operator: CorruptionOperator = field(default_factory=CorruptionOperator)
    perturb_scale: float = DEFAULT_PERTURB_SCALE


@dataclass(frozen=True)
class TransportPlan:
    """Doubly-stochastic-to-1/M plan from the Sinkhorn scaling."""

    P: np.ndarray
    tau: float
    iterations_used: int
    max_violation: float

    @property
    def converged(self):
        return self.max_violation < SINKHORN_TOL


def sample_independent(sample_source, sample_target, m, rng):
    """Independent draws: x0 ~ q(x0), x1 ~ q(x1), rows i.i.d."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    x0 = np.atleast_2d(np.asarray(sample_source(m, rng), dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(sample_target(m, rng), dtype=np.float64))
    return PairBatch(x0, x1)


def cost_matrix(x0, x1):
    """Squared Euclidean cost C_ij = ||x0_i - x1_j||^2, clipped at zero."""
    diff = x0[:, None, :] - x1[None, :, :]
    return np.maximum(np.einsum("ijk,ijk->ij", diff, diff), 0.0)


def sinkhorn_plan(x0, x1, tau, tol=SINKHORN_TOL, max_iter=SINKHORN_MAX_ITER):
    """Entropic OT plan between two equal-size clouds, uniform marginals.

    Runs the log-domain scaling until the worst marginal violation drops
    below ``tol`` or the sweep cap is hit (the returned plan then carries
    iterations_used == max_iter as the non-convergence flag).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    if x0.shape != x1.shape:
        raise ValueError("clouds must have matching shapes")
    if tau <= 0:
        raise ValueError("tau must be positive")
    m = x0.shape[0]
    c = np.ascontiguousarray(cost_matrix(x0, x1))
    f, g, sweeps, violation = kern.sinkhorn_potentials(c, float(tau), tol, max_iter)
    # the potentials already carry the 1/M marginal normalization
    plan = np.exp((f[:, None] + g[None, :] - c) / tau)
    return TransportPlan(plan, float(tau), int(sweeps), float(violation))


def sample_ot_pairs(plan, x0, x1, m, rng):
    """Draw m index pairs i.i.d. proportional to the plan weights."""
    p = np.asarray(plan.P, dtype=np.float64).ravel()
    total = p.sum()
    if total <= 0 or not np.isfinite(total):
        raise ValueError("degenerate transport plan")
    idx = rng.choice(p.size, size=m, p=p / total)
    i, j = np.unravel_index(idx, plan.P.shape)
    return PairBatch(np.atleast_2d(x0)[i].copy(), np.atleast_2d(x1)[j].copy())


def sample_supervised(x0, op, rng):
    """Pair each clean row with its freshly-corrupted observation."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    op.validate_dim(x0.shape[1])
    return PairBatch(x0.copy(), op.apply(x0, rng))


def perturb_x1(batch, scale, rng):
    """Add scale * N(0, I) noise to the x1 side; x0 untouched."""
    if scale < 0:
        raise ValueError("perturbation scale must be >= 0")
    if scale == 0.0:
        return batch
    noise = rng.standard_normal(batch.x1.shape)
    return PairBatch(batch.x0, batch.x1 + scale * noise)


def resolve_tau(kind, cost):
    """Absolute regularization strength for an EntropicOT kind on a batch."""
    if kind.tau_abs is not None:
        return kind.tau_abs
    mean_cost = float(cost.mean())
    return kind.tau_rel * mean_cost if mean_cost > 0 else kind.tau_rel


def draw_pair_batch(kind, sample_source, sample_target, m, rng, perturb=True):
    """Coupling dispatcher used by the trainer: one perturbed pair batch.

    Perturbation is skipped for mask-type supervised operators (the
    inpainting-style analog) and when ``perturb`` is False.
    """
    if isinstance(kind, Independent):
        batch = sample_independent(sample_source, sample_target, m, rng)
        scale = kind.perturb_scale
    elif isinstance(kind, EntropicOT):
        if m < 2:
            raise ValueError("OT coupling needs batch size >= 2")
        raw = sample_independent(sample_source, sample_target, m, rng)
        cost = cost_matrix(raw.x0, raw.x1)
        plan = sinkhorn_plan(raw.x0, raw.x1, resolve_tau(kind, cost))
        batch = sample_ot_pairs(plan, raw.x0, raw.x1, m, rng)
        scale = kind.perturb_scale
    elif isinstance(kind, Supervised):
        x0 = np.atleast_2d(np.asarray(sample_source(m, rng), dtype=np.float64))
        batch = sample_supervised(x0, kind.operator, rng)
        scale = 0.0 if kind.operator.is_mask else kind.perturb_scale
    else:
        raise ValueError(f"unknown coupling kind {kind!r}")
    if perturb and scale > 0.0:
        batch = perturb_x1(batch, scale, rng)
    return batch

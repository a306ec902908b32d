"""Pure-numpy kernels: the fallback twin of the compiled extension.

Every function here has an identically-named counterpart in ``_ckern.pyx``;
``gctm.backend`` picks one set at import time. Array contracts are shared:
float64 C-contiguous activations, float32 parameter storage, reductions
accumulated in float64.
"""

import numpy as np
from scipy.special import expit


def affine(h, w, b):
    """out = h @ w + b for a (M,k) batch, (k,n) weight, (n,) bias."""
    return h @ w + b


def affine_vjp(h, w, dz):
    """Reverse-mode of ``affine``: returns (dw, db, dh)."""
    return h.T @ dz, dz.sum(axis=0), dz @ w.T


def silu(z):
    """Sigmoid-weighted linear unit z * sigmoid(z)."""
    return z * expit(z)


def silu_vjp(z, da):
    """dz given upstream da, using the cached preactivation z."""
    s = expit(z)
    return da * (s * (1.0 + z * (1.0 - s)))


def time_embed(t, freqs):
    """Sinusoidal features of a time batch: columns [sin(t*f) | cos(t*f)]."""
    ang = np.multiply.outer(np.ascontiguousarray(t, dtype=np.float64), freqs)
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def lerp_rows(x0, x1, t):
    """(1 - t) * x0 + t * x1 with a per-row t."""
    tc = t[:, None]
    return (1.0 - tc) * x0 + tc * x1


def pseudo_huber_rows(a, b, c):
    """sqrt(||a - b||^2 + c^2) - c per row, sums accumulated in float64."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    sq = np.einsum("ij,ij->i", diff, diff)
    return np.sqrt(sq + c * c) - c


def adam_update(w, grad, m, v, step, lr, beta1, beta2, eps):
    """Bias-corrected Adam step, in place.

    w is the float32 parameter store; grad/m/v are float64. ``step`` is the
    1-based count of this update.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    w64 = w.astype(np.float64)
    w64 -= lr * mhat / (np.sqrt(vhat) + eps)
    w[:] = w64.astype(np.float32)


def ema_update(ema, w, decay):
    """ema += (1 - decay) * (w - ema), in place on the float32 shadow.

    The delta form keeps the update an exact fixed point at ema == w and an
    elementwise convex combination after float32 rounding.
    """
    delta = (w.astype(np.float64) - ema.astype(np.float64)) * (1.0 - decay)
    ema[:] = (ema.astype(np.float64) + delta).astype(np.float32)


def sinkhorn_potentials(cost, tau, tol, max_iter):
    """Log-domain Sinkhorn scaling to uniform marginals 1/M.

    Returns (f, g, sweeps, violation) where the plan is
    P_ij = exp((f_i + g_j - C_ij) / tau) and ``violation`` is the max
    absolute row-marginal error after the final column update.
    """
    m = cost.shape[0]
    log_marg = -np.log(m)
    f = np.zeros(m)
    g = np.zeros(m)
    inv_tau = 1.0 / tau
    sweeps = 0
    violation = np.inf
    for sweeps in range(1, max_iter + 1):
        # row scaling: rows become exact
        a = (g[None, :] - cost) * inv_tau
        amax = a.max(axis=1)
        f = tau * (log_marg - (amax + np.log(np.exp(a - amax[:, None]).sum(axis=1))))
        # column scaling: columns become exact
        a = (f[:, None] - cost) * inv_tau
        amax = a.max(axis=0)
        g = tau * (log_marg - (amax + np.log(np.exp(a - amax[None, :]).sum(axis=0))))
        # rows are now the violated marginal; the extra matrix pass runs on a
        # stride so it does not dominate the sweep cost
        if sweeps % 4 == 0 or sweeps == max_iter:
            logp = (f[:, None] + g[None, :] - cost) * inv_tau
            violation = np.abs(np.exp(logp).sum(axis=1) - 1.0 / m).max()
            if violation < tol:
                break
    return f, g, sweeps, violation

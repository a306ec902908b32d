"""Two-time-conditioned MLP regressor with exact reverse-mode gradients.

The network g(x, t, s) maps a point batch plus sinusoidal embeddings of the
two time conditions through SiLU hidden layers. Parameters live in a flat
float32 vector with an EMA shadow; all forward/backward arithmetic runs in
float64 so finite-difference checks hold tightly.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kern


class NonFiniteError(RuntimeError):
    """Raised when weights or gradients contain NaN/inf."""


@dataclass(frozen=True)
class TimeEmbedding:
    """Sinusoidal feature map for one time variable.

    Frequencies are scale * pi * 2**k for k < num_frequencies, giving
    2 * num_frequencies features (sin and cos) per time variable.
    """

    num_frequencies: int = 8
    scale: float = 1.0

    @property
    def width(self):
        return 2 * self.num_frequencies

    def frequencies(self):
        k = np.arange(self.num_frequencies, dtype=np.float64)
        return np.ascontiguousarray(self.scale * np.pi * (2.0**k))


def flat_size(layer_dims):
    """Total parameter count: sum over layers of (fan_in + 1) * fan_out."""
    return sum((a + 1) * b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass
class ParamStore:
    """Flat float32 parameter vector plus its EMA shadow.

    ``layer_dims`` is the full [input, hidden..., output] width list; the
    flat layout is, per layer, the (fan_in, fan_out) weight matrix in row
    -major order followed by the fan_out bias.
    """

    layer_dims: list
    weights: np.ndarray
    ema_weights: np.ndarray
    ema_decay: float = 0.999
    embedding: TimeEmbedding = field(default_factory=TimeEmbedding)

    def __post_init__(self):
        n = flat_size(self.layer_dims)
        if self.weights.shape != (n,):
            raise ValueError(f"weights length {self.weights.shape} != {n}")
        if self.ema_weights.shape != (n,):
            raise ValueError("ema_weights length differs from weights")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")

    @property
    def data_dim(self):
        return self.layer_dims[-1]


def init_params(dim, hidden=(256, 256, 256), embedding=None, ema_decay=0.999, seed=0):
    """Fan-in-scaled Gaussian init, biases zero, EMA shadow equal to weights."""
    emb = embedding if embedding is not None else TimeEmbedding()
    dims = [dim + 2 * emb.width, *hidden, dim]
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    flat = np.concatenate(chunks).astype(np.float32)
    return ParamStore(dims, flat, flat.copy(), ema_decay=ema_decay, embedding=emb)


def layer_views(layer_dims, flat):
    """Unpack a flat vector into float64 (W, b) pairs."""
    flat64 = np.ascontiguousarray(flat, dtype=np.float64)
    views, off = [], 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = flat64[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = flat64[off : off + fan_out]
        off += fan_out
        views.append((np.ascontiguousarray(w), np.ascontiguousarray(b)))
    return views


def _assemble_input(x, t, s, embedding):
    freqs = embedding.frequencies()
    xt = np.ascontiguousarray(x, dtype=np.float64)
    return np.concatenate(
        [xt, kern.time_embed(t, freqs), kern.time_embed(s, freqs)], axis=1
    )


def _forward_views(views, h):
    """Run the layer stack; returns output and per-layer (input, preact) cache."""
    cache = []
    last = len(views) - 1
    for li, (w, b) in enumerate(views):
        z = kern.affine(h, w, b)
        cache.append((h, z))
        h = kern.silu(z) if li < last else z
    return h, cache


def _backward_views(views, cache, dy):
    """Reverse sweep; returns (flat gradient, gradient w.r.t. input block)."""
    total = sum(w.size + b.size for w, b in views)
    flat = np.empty(total)
    offsets = np.cumsum([0] + [w.size + b.size for w, b in views])
    dz = np.ascontiguousarray(dy, dtype=np.float64)
    for li in range(len(views) - 1, -1, -1):
        w, _ = views[li]
        h, z = cache[li]
        if li < len(views) - 1:
            dz = kern.silu_vjp(z, dz)
        dw, db, dh = kern.affine_vjp(h, w, dz)
        off = offsets[li]
        flat[off : off + dw.size] = dw.ravel()
        flat[off + dw.size : off + dw.size + db.size] = db
        dz = dh
    return flat, dz


def _validate(params, x, t, s):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)))
    s = np.ascontiguousarray(np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],)))
    if x.shape[1] != params.data_dim:
        raise ValueError(f"point batch has dim {x.shape[1]}, network expects {params.data_dim}")
    if np.any(t < 0.0) or np.any(t > 1.0) or np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("time conditions must lie in [0, 1]")
    if not np.all(np.isfinite(params.weights)):
        raise NonFiniteError("network weights contain NaN/inf")
    return x, t, s


def forward(params, x, t, s, use_ema=False):
    """Evaluate g(x, t, s). Deterministic; float64 math over float32 weights."""
    x, t, s = _validate(params, x, t, s)
    flat = params.ema_weights if use_ema else params.weights
    views = layer_views(params.layer_dims, flat)
    h = _assemble_input(x, t, s, params.embedding)
    y, _ = _forward_views(views, h)
    return y


def backward(params, x, t, s, output_cotangent, use_ema=False):
    """Exact reverse-mode gradient of <cotangent, g(x,t,s)>.

    Returns (flat weight gradient, gradient w.r.t. x); the latter feeds the
    measurement-guidance step of restoration.
    """
    x, t, s = _validate(params, x, t, s)
    dy = np.asarray(output_cotangent, dtype=np.float64)
    if dy.shape != (x.shape[0], params.data_dim):
        raise ValueError("cotangent shape must match the output shape")
    flat = params.ema_weights if use_ema else params.weights
    views = layer_views(params.layer_dims, flat)
    h = _assemble_input(x, t, s, params.embedding)
    _, cache = _forward_views(views, h)
    grad, dinput = _backward_views(views, cache, dy)
    return grad, dinput[:, : params.data_dim]


@dataclass
class OptimizerState:
    """Adam state; moment arrays are float64 and match the flat weight length."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def default_lr(batch_size):
    """Learning-rate rule 0.0002 / (128 / batch_size)."""
    return 0.0002 / (128.0 / batch_size)


def init_optimizer(params, batch_size=128, lr=None):
    n = params.weights.shape[0]
    return OptimizerState(
        first_moment=np.zeros(n),
        second_moment=np.zeros(n),
        lr=default_lr(batch_size) if lr is None else lr,
    )


def adam_step(params, opt, gradient):
    """One bias-corrected Adam update, in place; rejects non-finite gradients."""
    grad = np.ascontiguousarray(gradient, dtype=np.float64)
    if grad.shape != params.weights.shape:
        raise ValueError("gradient length differs from weights")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient; parameters left unchanged")
    opt.step_count += 1
    kern.adam_update(
        params.weights,
        grad,
        opt.first_moment,
        opt.second_moment,
        opt.step_count,
        opt.lr,
        opt.beta1,
        opt.beta2,
        opt.eps,
    )
    return params, opt


def ema_update(params):
    """Refresh the EMA shadow: ema <- decay * ema + (1 - decay) * weights."""
    kern.ema_update(params.ema_weights, params.weights, params.ema_decay)
    return params


def pseudo_huber(a, b, dim=None):
    """Robust distance sqrt(||a-b||^2 + c^2) - c with c = 0.00054 sqrt(dim).

    Returns one non-negative value per batch row.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError("batch shapes disagree")
    d = a.shape[1] if dim is None else dim
    c = 0.00054 * np.sqrt(float(d))
    return kern.pseudo_huber_rows(np.ascontiguousarray(a), np.ascontiguousarray(b), c)

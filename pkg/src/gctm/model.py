"""Network-backed trajectory model: the raw two-time regressor plus the
boundary-exact jump wrapper, with input-gradient support for guidance."""

import numpy as np

from . import nn
from .flow_ode import solution_jump


class TrajectoryModel:
    """Callable pair (anchor, jump) over a ParamStore.

    ``anchor`` is the raw network g(x, t, s); ``jump`` wraps it so the
    t -> t move is the exact identity. Sampling-facing code defaults to the
    EMA weights.
    """

    def __init__(self, params, use_ema=True):
        self.params = params
        self.use_ema = use_ema

    def anchor(self, x, t, s):
        return nn.forward(self.params, x, t, s, use_ema=self.use_ema)

    def jump(self, x, t, s):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)).copy()
        s_arr = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],)).copy()
        same = s_arr == t_arr
        out = np.empty_like(x)
        if np.all(same):
            return x.copy()
        live = ~same
        g = self.anchor(x[live], t_arr[live], s_arr[live])
        out[live] = solution_jump(x[live], t_arr[live], s_arr[live], g)
        out[same] = x[same]
        return out

    def posterior_mean(self, x, t):
        """Anchor limit g(x, t, t); the per-time denoiser used as velocity."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return self.anchor(x, t_arr, t_arr)

    def anchor_vjp_x(self, x, t, s, cotangent):
        """Gradient of <cotangent, anchor(x,t,s)> with respect to x."""
        _, dx = nn.backward(self.params, x, t, s, cotangent, use_ema=self.use_ema)
        return dx

    def jump_vjp_x(self, x, t, s, cotangent):
        """Gradient of <cotangent, jump(x,t,s)> with respect to x."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        s_arr = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],))
        ratio = (s_arr / t_arr)[:, None]
        cot = np.asarray(cotangent, dtype=np.float64)
        dx_net = self.anchor_vjp_x(x, t_arr, s_arr, (1.0 - ratio) * cot)
        return ratio * cot + dx_net

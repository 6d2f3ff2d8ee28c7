"""Dense reference transformer blocks: the oracle and the fast path.

Attention keeps explicit K/V tensors (autoregressive mode) or materializes
the causal mask (parallel mode). Scores are unscaled dot products unless the
`scaled` flag is set; pre-norm everywhere; q/k/v projections carry no bias.
"""

from __future__ import annotations

import numpy as np

from . import numerics
from .numerics import ShapeError


class RefAttentionBlock:
    def __init__(self, wq, wk, wv, wo, bo, norm_gain, n_heads, window=None,
                 eps=1e-6, scaled=False):
        d = wq.shape[1]
        if d % n_heads != 0:
            raise ValueError(f"embed dim {d} not divisible by {n_heads} heads")
        self.d_model = d
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.window = window  # None means unlimited
        self.eps = eps
        self.scaled = scaled
        self.wq, self.wk, self.wv, self.wo, self.bo = wq, wk, wv, wo, bo
        self.norm_gain = norm_gain
        self.k_cache = []  # one (D,) row per processed token
        self.v_cache = []

    def reset(self):
        self.k_cache = []
        self.v_cache = []

    def attend_step(self, x_t: np.ndarray, t: int | None = None) -> np.ndarray:
        if x_t.shape != (self.d_model,):
            raise ShapeError(f"expected input of dim {self.d_model}")
        if t is not None and t != len(self.k_cache):
            raise ValueError(f"token index {t} != cache length {len(self.k_cache)}")
        xn = numerics.rmsnorm(x_t, self.norm_gain, self.eps)
        q = self.wq @ xn
        self.k_cache.append(self.wk @ xn)
        self.v_cache.append(self.wv @ xn)
        lo = 0 if self.window is None else max(0, len(self.k_cache) - self.window)
        K = np.asarray(self.k_cache[lo:])  # (n, D)
        V = np.asarray(self.v_cache[lo:])
        dh = self.head_dim
        y = np.empty(self.d_model)
        for h in range(self.n_heads):
            sl = slice(h * dh, (h + 1) * dh)
            a = K[:, sl] @ q[sl]
            if self.scaled:
                a = a / np.sqrt(dh)
            p = numerics.softmax(a)
            y[sl] = p @ V[:, sl]
        return self.wo @ y + self.bo

    def forward_parallel(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.d_model:
            raise ShapeError(f"expected (T, {self.d_model}) input, got {xs.shape}")
        T = xs.shape[0]
        xn = np.stack([numerics.rmsnorm(row, self.norm_gain, self.eps) for row in xs])
        Q = xn @ self.wq.T
        K = xn @ self.wk.T
        V = xn @ self.wv.T
        idx = np.arange(T)
        visible = idx[None, :] <= idx[:, None]
        if self.window is not None:
            visible &= idx[None, :] > idx[:, None] - self.window
        dh = self.head_dim
        Y = np.empty((T, self.d_model))
        for h in range(self.n_heads):
            sl = slice(h * dh, (h + 1) * dh)
            scores = Q[:, sl] @ K[:, sl].T
            if self.scaled:
                scores = scores / np.sqrt(dh)
            scores = np.where(visible, scores, -np.inf)
            scores -= scores.max(axis=1, keepdims=True)
            P = np.exp(scores)
            P /= P.sum(axis=1, keepdims=True)
            Y[:, sl] = P @ V[:, sl]
        return Y @ self.wo.T + self.bo


class MlpBlock:
    def __init__(self, w1, w2, b2, norm_gain, eps=1e-6):
        self.w1, self.w2, self.b2 = w1, w2, b2
        self.norm_gain = norm_gain
        self.eps = eps
        self.d_model = w1.shape[1]

    def step(self, x_t: np.ndarray) -> np.ndarray:
        if x_t.shape != (self.d_model,):
            raise ShapeError(f"expected input of dim {self.d_model}")
        xn = numerics.rmsnorm(x_t, self.norm_gain, self.eps)
        return self.w2 @ numerics.relu(self.w1 @ xn) + self.b2

    def forward_parallel(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([self.step(row) for row in xs])


class TransformerLayer:
    """Residual wiring: x + attn(x), then + mlp of the sum."""

    def __init__(self, attn, mlp: MlpBlock):
        self.attn = attn
        self.mlp = mlp

    def layer_step(self, x_t: np.ndarray, t: int | None = None) -> np.ndarray:
        h = x_t + self.attn.attend_step(x_t, t)
        return h + self.mlp.step(h)

    def forward_parallel(self, xs: np.ndarray) -> np.ndarray:
        hs = xs + self.attn.forward_parallel(xs)
        return hs + self.mlp.forward_parallel(hs)

    def reset(self):
        self.attn.reset()

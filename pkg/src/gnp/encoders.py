"""Context-set encoders producing a target-queryable representation.

Three flavours: a DeepSet (global vector), cross-attention (per-context
keys/values queried at targets), and a SetConv/CNN stack on a uniform grid.
Each exposes ``init_params``, ``encode`` and ``query``; parameters are flat
name->array dicts so they can be watched on an autodiff tape.

Permutation invariance over the context set is exact, not just analytic:
every encoder first sorts the context canonically (by input, ties by
output), which pins the floating-point reduction order.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import mlp_apply, mlp_init

DENSITY_EPS = 1e-8


def _canonical_context(x_c, y_c):
    x_c = np.asarray(x_c, dtype=np.float64).reshape(-1)
    y_c = np.asarray(y_c, dtype=np.float64).reshape(-1)
    if x_c.shape[0] != y_c.shape[0]:
        raise ValueError(
            f"context sizes disagree: {x_c.shape[0]} inputs, {y_c.shape[0]} outputs"
        )
    order = np.lexsort((y_c, x_c))
    return x_c[order], y_c[order]


def _col(v):
    return np.asarray(v, dtype=np.float64).reshape(-1, 1)


class DeepSetEncoder:
    """r = rho(mean_i phi(x_i, y_i)); an empty context pools to the zero vector."""

    uses_target_inputs = True

    def __init__(self, width=128, depth=3, rep_dim=128):
        self.width = width
        self.depth = depth
        self.rep_dim = rep_dim
        self._phi_sizes = [2] + [width] * depth
        self._rho_sizes = [width] * depth + [rep_dim]

    def init_params(self, rng):
        p = {}
        p.update(mlp_init(rng, "phi", self._phi_sizes))
        p.update(mlp_init(rng, "rho", self._rho_sizes))
        return p

    def encode(self, p, x_c, y_c):
        x_c, y_c = _canonical_context(x_c, y_c)
        n = x_c.shape[0]
        if n == 0:
            pooled = T.tensor(np.zeros((1, self.width)))
        else:
            pairs = T.tensor(np.column_stack([x_c, y_c]))
            feats = mlp_apply(p, "phi", pairs, self.depth)          # [N, w]
            pooled = T.tmean(feats, axis=0, keepdims=True)          # [1, w]
        return mlp_apply(p, "rho", pooled, self.depth)              # [1, d_r]

    def query(self, p, rep, x_t):
        m = np.asarray(x_t).reshape(-1).shape[0]
        ones = T.tensor(np.ones((m, 1)))
        return T.matmul(ones, rep)                                  # [M, d_r]


class AttentiveEncoder:
    """Multi-head scaled dot-product cross-attention over the context.

    Queries and keys come from a shared input-embedding MLP so a query at a
    context location lines up with that point's key. An empty context makes
    ``query`` return a learned default row. ``include_global`` optionally
    concatenates a DeepSet summary to every queried vector (off by default).
    """

    uses_target_inputs = True

    def __init__(self, width=128, depth=3, embed_dim=128, n_heads=8,
                 include_global=False):
        if embed_dim % n_heads != 0:
            raise ValueError(
                f"embed_dim {embed_dim} not divisible by n_heads {n_heads}"
            )
        self.width = width
        self.depth = depth
        self.embed_dim = embed_dim
        self.n_heads = n_heads
        self.head_dim = embed_dim // n_heads
        self.include_global = include_global
        self._x_sizes = [1] + [width] * (depth - 1) + [embed_dim]
        self._v_sizes = [2] + [width] * (depth - 1) + [embed_dim]
        self._global = DeepSetEncoder(width, depth, embed_dim) if include_global else None
        self.rep_dim = embed_dim * (2 if include_global else 1)

    def init_params(self, rng):
        p = {}
        p.update(mlp_init(rng, "xemb", self._x_sizes))
        p.update(mlp_init(rng, "val", self._v_sizes))
        p["default"] = np.zeros((1, self.embed_dim))
        if self._global is not None:
            for name, arr in self._global.init_params(rng).items():
                p[f"glob.{name}"] = arr
        return p

    def encode(self, p, x_c, y_c):
        x_c, y_c = _canonical_context(x_c, y_c)
        n = x_c.shape[0]
        if n == 0:
            keys = values = None
        else:
            keys = mlp_apply(p, "xemb", T.tensor(_col(x_c)), self.depth)
            values = mlp_apply(p, "val", T.tensor(np.column_stack([x_c, y_c])), self.depth)
        glob = None
        if self._global is not None:
            sub = {k[len("glob."):]: v for k, v in p.items() if k.startswith("glob.")}
            glob = self._global.encode(sub, x_c, y_c)
        return {"keys": keys, "values": values, "global": glob}

    def query(self, p, rep, x_t, temperature=None):
        x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
        m = x_t.shape[0]
        if rep["keys"] is None:
            out = T.matmul(T.tensor(np.ones((m, 1))), p["default"])
        else:
            if temperature is None:
                temperature = float(np.sqrt(self.head_dim))
            queries = mlp_apply(p, "xemb", T.tensor(_col(x_t)), self.depth)
            heads = []
            for h in range(self.n_heads):
                lo = h * self.head_dim
                q_h = T.narrow(queries, 1, lo, self.head_dim)
                k_h = T.narrow(rep["keys"], 1, lo, self.head_dim)
                v_h = T.narrow(rep["values"], 1, lo, self.head_dim)
                logits = T.mul(T.matmul(q_h, T.transpose(k_h)), 1.0 / temperature)
                weights = T.softmax(logits, axis=1)                 # [M, N]
                heads.append(T.matmul(weights, v_h))                # [M, d_h]
            out = T.concat(heads, axis=1)                           # [M, E]
        if rep["global"] is not None:
            ones = T.tensor(np.ones((m, 1)))
            out = T.concat([out, T.matmul(ones, rep["global"])], axis=1)
        return out


class ConvEncoder:
    """SetConv embedding onto a uniform grid, a CNN, and a smoothing readout.

    The grid is derived from the context alone (anchored at its minimum, so
    translating the data translates the grid with it) and never sees the
    targets; queried outputs therefore marginalise exactly. Channel 0 is the
    kernel density of the context, channel 1 the density-normalised output
    signal. Conv taps are spaced ``grid_multiplier`` nodes apart, keeping the
    filters' extent fixed in input units when the grid is refined.
    """

    uses_target_inputs = False

    def __init__(self, channels=64, layers=6, kernel_size=5,
                 lengthscale_init=0.2, margin=1.0, grid_multiplier=1):
        self.channels = channels
        self.layers = layers
        self.kernel_size = kernel_size
        self.lengthscale_init = lengthscale_init
        self.margin = margin
        self.grid_multiplier = int(grid_multiplier)
        self.spacing = 0.5 * lengthscale_init / self.grid_multiplier
        self.rep_dim = channels

    def init_params(self, rng):
        p = {
            "in_ls_raw": np.full((1, 1), np.log(self.lengthscale_init)),
            "out_ls_raw": np.full((1, 1), np.log(self.lengthscale_init)),
        }
        c_in = 2
        for i in range(self.layers):
            fan_in = self.kernel_size * c_in
            bound = 1.0 / np.sqrt(fan_in)
            p[f"conv{i}.w"] = rng.uniform(-bound, bound, size=(self.channels, fan_in))
            p[f"conv{i}.b"] = np.zeros((self.channels, 1))
            c_in = self.channels
        return p

    def _build_grid(self, x_c):
        if x_c.shape[0] == 0:
            lo, hi = -self.margin, self.margin
        else:
            lo = float(np.min(x_c)) - self.margin
            hi = float(np.max(x_c)) + self.margin
        count = int(np.ceil((hi - lo) / self.spacing)) + 1
        return lo + self.spacing * np.arange(count)

    def encode(self, p, x_c, y_c):
        x_c, y_c = _canonical_context(x_c, y_c)
        grid = self._build_grid(x_c)
        g_len = grid.shape[0]
        if x_c.shape[0] == 0:
            h = T.tensor(np.zeros((2, g_len)))
        else:
            d2 = T.tensor((grid[:, None] - x_c[None, :]) ** 2)      # [G, N]
            ls = T.exp(p["in_ls_raw"])
            scale = T.div(-0.5, T.mul(ls, ls))
            weights = T.exp(T.mul(d2, scale))                       # [G, N]
            density = T.tsum(weights, axis=1, keepdims=True)        # [G, 1]
            signal = T.matmul(weights, T.tensor(_col(y_c)))         # [G, 1]
            mask = (density.data > DENSITY_EPS).astype(np.float64)
            safe = T.add(density, T.tensor(1.0 - mask))
            normalized = T.mul(T.div(signal, safe), T.tensor(mask))
            h = T.concat([T.transpose(density), T.transpose(normalized)], axis=0)
        for i in range(self.layers):
            h = T.conv1d(h, p[f"conv{i}.w"], p[f"conv{i}.b"],
                         dilation=self.grid_multiplier)
            if i < self.layers - 1:
                h = T.relu(h)
        return {"grid": grid, "feats": h}                           # feats: [C, G]

    def query(self, p, rep, x_t):
        x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
        d2 = T.tensor((x_t[:, None] - rep["grid"][None, :]) ** 2)   # [M, G]
        ls = T.exp(p["out_ls_raw"])
        scale = T.div(-0.5, T.mul(ls, ls))
        weights = T.exp(T.mul(d2, scale))
        norm = T.div(weights, T.tsum(weights, axis=1, keepdims=True))
        return T.matmul(norm, T.transpose(rep["feats"]))            # [M, C]

"""Gaussian predictive heads: mean-field, low-rank (``linear``), and ``kvv``.

Every head maps per-target feature rows to a mean vector and a covariance
representation, and carries one learned homoscedastic observation-noise
variance (softplus-parametrized). ``predictive_loglik`` scores targets under
N(y; m, K + noise * I) with a representation-appropriate algorithm:

  * Diagonal  -- sum of scalar Gaussian log-densities,
  * LowRank   -- Woodbury / matrix-determinant lemma, O(M D^2 + D^3),
  * Dense     -- Cholesky, O(M^3),

all built from tape ops, so the result is differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import mlp_apply, mlp_init

LOG_2PI = float(np.log(2.0 * np.pi))

# softplus(raw) = 0.01, i.e. an initial noise standard deviation of 0.1
RAW_NOISE_INIT = float(np.log(np.expm1(0.01)))


@dataclass
class Diagonal:
    var: T.Tensor          # [M], model variance excluding observation noise


@dataclass
class LowRank:
    factor: T.Tensor       # [M, D]; implied covariance factor @ factor.T


@dataclass
class Dense:
    cov: T.Tensor          # [M, M], symmetric PSD


@dataclass
class GaussianPredictive:
    mean: T.Tensor         # [M]
    cov: object            # Diagonal | LowRank | Dense
    noise_var: T.Tensor    # scalar

    def mean_np(self):
        return np.asarray(self.mean.data).reshape(-1)

    def noise_np(self):
        return float(self.noise_var.data)

    def cov_np(self):
        """Materialize the model covariance (noise excluded) as a dense array."""
        c = self.cov
        if isinstance(c, Diagonal):
            return np.diag(np.asarray(c.var.data).reshape(-1))
        if isinstance(c, LowRank):
            phi = c.factor.data
            return phi @ phi.T
        return np.asarray(c.cov.data)

    def marginal_var_np(self):
        """Per-point variance including observation noise."""
        c = self.cov
        if isinstance(c, Diagonal):
            v = np.asarray(c.var.data).reshape(-1)
        elif isinstance(c, LowRank):
            v = np.sum(c.factor.data**2, axis=1)
        else:
            v = np.diagonal(c.cov.data).copy()
        return v + self.noise_np()


def _noise_from(p):
    return T.reshape(T.softplus(p["raw_noise"]), ())


def _column(t, idx, m):
    return T.reshape(T.narrow(t, 1, idx, 1), (m,))


class MeanFieldHead:
    """Independent per-target Gaussians from one MLP: columns (mu, pre-var)."""

    kind = "meanfield"

    def __init__(self, width=128, depth=3, d_g=0):
        self.width = width
        self.depth = depth
        self.d_g = 0

    def init_params(self, rng, in_dim):
        p = mlp_init(rng, "mf", [in_dim] + [self.width] * (self.depth - 1) + [2])
        p["raw_noise"] = np.full((1, 1), RAW_NOISE_INIT)
        return p

    def predict(self, p, feats):
        m = feats.data.shape[0]
        out = mlp_apply(p, "mf", feats, self.depth)                 # [M, 2]
        mean = _column(out, 0, m)
        var = T.softplus(_column(out, 1, m))
        return GaussianPredictive(mean, Diagonal(var), _noise_from(p))


class LinearHead:
    """Covariance from D_g neural basis functions: K = Phi Phi^T."""

    kind = "linear"

    def __init__(self, width=128, depth=3, d_g=128):
        self.width = width
        self.depth = depth
        self.d_g = d_g

    def init_params(self, rng, in_dim):
        hidden = [self.width] * (self.depth - 1)
        p = {}
        p.update(mlp_init(rng, "f", [in_dim] + hidden + [1]))
        p.update(mlp_init(rng, "g", [in_dim] + hidden + [self.d_g]))
        p["raw_noise"] = np.full((1, 1), RAW_NOISE_INIT)
        return p

    def predict(self, p, feats):
        m = feats.data.shape[0]
        mean = T.reshape(mlp_apply(p, "f", feats, self.depth), (m,))
        phi = mlp_apply(p, "g", feats, self.depth)                  # [M, D_g]
        return GaussianPredictive(mean, LowRank(phi), _noise_from(p))


class KvvHead:
    """EQ kernel on a learned embedding, magnitude-modulated per target.

    K_ij = exp(-0.5 ||g_i - g_j||^2) * v_i * v_j. The embedding network's
    final layer starts scaled down so the initial covariance is near-smooth,
    and v starts near 1 so initial marginal variances are prior-sized.
    """

    kind = "kvv"

    def __init__(self, width=128, depth=3, d_g=16):
        self.width = width
        self.depth = depth
        self.d_g = d_g

    def init_params(self, rng, in_dim):
        hidden = [self.width] * (self.depth - 1)
        p = {}
        p.update(mlp_init(rng, "f", [in_dim] + hidden + [1]))
        p.update(mlp_init(rng, "g", [in_dim] + hidden + [self.d_g]))
        p.update(mlp_init(rng, "v", [in_dim] + hidden + [1]))
        p[f"g.w{self.depth - 1}"] = p[f"g.w{self.depth - 1}"] * 0.1
        p[f"v.b{self.depth - 1}"] = np.ones((1, 1))
        p["raw_noise"] = np.full((1, 1), RAW_NOISE_INIT)
        return p

    def predict(self, p, feats):
        m = feats.data.shape[0]
        mean = T.reshape(mlp_apply(p, "f", feats, self.depth), (m,))
        emb = mlp_apply(p, "g", feats, self.depth)                  # [M, D_g]
        v = mlp_apply(p, "v", feats, self.depth)                    # [M, 1]
        corr = T.exp(T.mul(T.sqdist(emb, emb), -0.5))               # [M, M]
        cov = T.mul(corr, T.matmul(v, T.transpose(v)))
        return GaussianPredictive(mean, Dense(cov), _noise_from(p))


HEAD_KINDS = {
    "meanfield": MeanFieldHead,
    "linear": LinearHead,
    "kvv": KvvHead,
}


def predictive_loglik(pred, y_t):
    """log N(y_t; mean, K + noise * I) as a scalar tensor."""
    y = np.asarray(y_t, dtype=np.float64).reshape(-1)
    m = y.shape[0]
    if pred.mean.data.shape[0] != m:
        raise ValueError(
            f"dimensions disagree: predictive over {pred.mean.data.shape[0]} "
            f"targets, y_t has {m}"
        )
    resid = T.sub(T.tensor(y), pred.mean)                           # [M]
    noise = pred.noise_var
    cov = pred.cov
    if isinstance(cov, Diagonal):
        total = T.add(cov.var, noise)
        quad = T.tsum(T.div(T.mul(resid, resid), total))
        logdet = T.tsum(T.log(total))
    elif isinstance(cov, LowRank):
        phi = cov.factor
        d = phi.data.shape[1]
        r = T.reshape(resid, (m, 1))
        gram = T.matmul(T.transpose(phi), phi)                      # [D, D]
        cap = T.add(gram, T.mul(T.tensor(np.eye(d)), noise))
        l = T.cholesky(cap)
        beta = T.trisolve(l, T.matmul(T.transpose(phi), r))         # [D, 1]
        quad = T.div(T.sub(T.tsum(T.mul(r, r)), T.tsum(T.mul(beta, beta))), noise)
        logdet = T.add(
            T.mul(T.tsum(T.log(T.diagonal(l))), 2.0),
            T.mul(T.log(noise), float(m - d)),
        )
    else:
        total = T.add(cov.cov, T.mul(T.tensor(np.eye(m)), noise))
        l = T.cholesky(total)
        alpha = T.trisolve(l, T.reshape(resid, (m, 1)))
        quad = T.tsum(T.mul(alpha, alpha))
        logdet = T.mul(T.tsum(T.log(T.diagonal(l))), 2.0)
    ll = T.mul(T.add(T.add(quad, logdet), m * LOG_2PI), -0.5)
    return T.reshape(ll, ())

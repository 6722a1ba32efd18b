"""Exact GP posterior under the true generating kernel.

This is the performance ceiling the learned models are compared against,
plus a diagonalized variant (off-diagonal covariance zeroed) that serves as
the matching mean-field ceiling. All computations are plain float64 via
Cholesky with the shared jitter policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import kernel_matrix
from .linalg import cholesky_with_jitter

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GPPosterior:
    mean: np.ndarray       # [M]
    cov: np.ndarray        # [M, M], symmetric
    noise_var: float       # observation noise, units of y^2


def posterior(spec, noise_var, x_c, y_c, x_t):
    """Posterior over target inputs given noisy context observations.

    m = K_tc (K_cc + s^2 I)^-1 y_c
    K = K_tt - K_tc (K_cc + s^2 I)^-1 K_ct

    An empty context returns the prior (zero mean, K_tt).
    """
    if noise_var <= 0.0:
        raise ValueError(f"noise_var must be > 0, got {noise_var}")
    x_c = np.asarray(x_c, dtype=np.float64).reshape(-1)
    y_c = np.asarray(y_c, dtype=np.float64).reshape(-1)
    x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
    if x_c.shape[0] != y_c.shape[0]:
        raise ValueError(
            f"context sizes disagree: {x_c.shape[0]} inputs, {y_c.shape[0]} outputs"
        )
    k_tt = kernel_matrix(spec, x_t, x_t)
    if x_c.shape[0] == 0:
        return GPPosterior(np.zeros(x_t.shape[0]), k_tt, float(noise_var))
    k_cc = kernel_matrix(spec, x_c, x_c) + noise_var * np.eye(x_c.shape[0])
    k_ct = kernel_matrix(spec, x_c, x_t)
    l, _ = cholesky_with_jitter(k_cc)
    a = solve_triangular(l, k_ct, lower=True)          # [N, M]
    alpha = solve_triangular(l, y_c, lower=True)       # [N]
    mean = a.T @ alpha
    cov = k_tt - a.T @ a
    cov = 0.5 * (cov + cov.T)
    return GPPosterior(mean, cov, float(noise_var))


def diagonalize(p):
    """Zero the off-diagonal covariance; the mean is untouched."""
    return GPPosterior(p.mean.copy(), np.diag(np.diagonal(p.cov)), p.noise_var)


def gaussian_loglik(mean, cov, noise_var, y):
    """log N(y; mean, cov + noise_var * I), in nats, via Cholesky."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    cov = np.asarray(cov, dtype=np.float64)
    n = y.shape[0]
    if mean.shape[0] != n or cov.shape != (n, n):
        raise ValueError(
            f"dimensions disagree: mean {mean.shape}, cov {cov.shape}, y {y.shape}"
        )
    if n == 0:
        return 0.0
    l, _ = cholesky_with_jitter(cov + noise_var * np.eye(n))
    alpha = solve_triangular(l, y - mean, lower=True)
    return float(
        -0.5 * alpha @ alpha - np.sum(np.log(np.diagonal(l))) - 0.5 * n * LOG_2PI
    )


def posterior_loglik(spec, noise_var, dataset):
    """Score a dataset's targets under the exact posterior."""
    p = posterior(spec, noise_var, dataset.x_c, dataset.y_c, dataset.x_t)
    return gaussian_loglik(p.mean, p.cov, p.noise_var, dataset.y_t)


def diagonalized_loglik(spec, noise_var, dataset):
    """Score under the posterior with off-diagonal covariance zeroed."""
    p = diagonalize(posterior(spec, noise_var, dataset.x_c, dataset.y_c, dataset.x_t))
    return gaussian_loglik(p.mean, p.cov, p.noise_var, dataset.y_t)

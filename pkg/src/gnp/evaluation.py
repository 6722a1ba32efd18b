"""Scoring, coherent function sampling, covariance extraction, and
downstream event-probability estimation.

Predictors share one duck-typed surface: ``predict(x_c, y_c, x_t)`` returns
a GaussianPredictive. ``ModelPredictor`` wraps trained parameters;
``OraclePredictor`` wraps the exact GP posterior (optionally diagonalized)
so the oracle and the learned models are scored by the same code path.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

from . import oracle
from . import tensor as T
from .heads import Dense, Diagonal, GaussianPredictive, LowRank, predictive_loglik
from .linalg import cholesky_with_jitter


class EvaluationError(RuntimeError):
    """Numeric failure while scoring; carries the failing episode index."""

    def __init__(self, index, cause):
        self.index = index
        super().__init__(f"evaluation failed at episode {index}: {cause}")


class ModelPredictor:
    def __init__(self, model, values):
        self.model = model
        self.values = values

    def predict(self, x_c, y_c, x_t):
        params = {k: T.Tensor(v) for k, v in self.values.items()}
        return self.model.predict(params, x_c, y_c, x_t)


class OraclePredictor:
    """Exact posterior under the true kernel; knows the generator's noise."""

    def __init__(self, kernel, noise_var, diagonalized=False):
        self.kernel = kernel
        self.noise_var = noise_var
        self.diagonalized = diagonalized

    def predict(self, x_c, y_c, x_t):
        post = oracle.posterior(self.kernel, self.noise_var, x_c, y_c, x_t)
        if self.diagonalized:
            post = oracle.diagonalize(post)
        return GaussianPredictive(
            mean=T.tensor(post.mean),
            cov=Dense(T.tensor(post.cov)),
            noise_var=T.tensor(post.noise_var),
        )


def evaluate(predictor, episodes):
    """Mean and standard error of joint and per-point log-lik over episodes."""
    if not episodes:
        raise ValueError("evaluate: corpus is empty")
    joint = np.empty(len(episodes))
    per_point = np.empty(len(episodes))
    for i, ep in enumerate(episodes):
        try:
            pred = predictor.predict(ep.x_c, ep.y_c, ep.x_t)
            ll = float(predictive_loglik(pred, ep.y_t).data)
        except Exception as exc:
            raise EvaluationError(i, exc) from exc
        joint[i] = ll
        per_point[i] = ll / max(ep.n_target, 1)

    def _stats(a):
        n = a.shape[0]
        se = float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return float(a.mean()), se

    jm, jse = _stats(joint)
    pm, pse = _stats(per_point)
    return {
        "episodes": len(episodes),
        "loglik_joint_mean": jm,
        "loglik_joint_se": jse,
        "loglik_per_point_mean": pm,
        "loglik_per_point_se": pse,
    }


def evaluate_with_oracle(predictor, task, episodes):
    """Model, oracle, and diagonalized-oracle rows on the same corpus."""
    return {
        "model": evaluate(predictor, episodes),
        "oracle": evaluate(
            OraclePredictor(task.kernel, task.noise_var), episodes
        ),
        "diag_oracle": evaluate(
            OraclePredictor(task.kernel, task.noise_var, diagonalized=True), episodes
        ),
    }


def sample_functions(pred, n_samples, rng, noiseless=False):
    """Coherent draws from the predictive, one row per sample.

    Diagonal: independent per-point draws. LowRank: weight-space sampling
    y = m + Phi w, O(M D) per sample. Dense: y = m + L z via Cholesky,
    O(M^3) once plus O(M^2) per sample. Observation noise is added unless
    ``noiseless``.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    m = pred.mean_np()
    cov = pred.cov
    if isinstance(cov, Diagonal):
        sd = np.sqrt(np.asarray(cov.var.data).reshape(-1))
        samples = m + rng.standard_normal((n_samples, m.shape[0])) * sd
    elif isinstance(cov, LowRank):
        phi = cov.factor.data
        w = rng.standard_normal((phi.shape[1], n_samples))
        samples = m + (phi @ w).T
    else:
        l, _ = cholesky_with_jitter(cov.cov.data)
        z = rng.standard_normal((m.shape[0], n_samples))
        samples = m + (l @ z).T
    if not noiseless:
        samples = samples + np.sqrt(pred.noise_np()) * rng.standard_normal(
            samples.shape
        )
    return samples


def extract_covariance(predictor, x_c, y_c, x_grid):
    """Materialize the predictive covariance over a query grid (noise excluded)."""
    x_grid = np.asarray(x_grid, dtype=np.float64).reshape(-1)
    if x_grid.shape[0] == 0:
        raise ValueError("extract_covariance: empty grid")
    return predictor.predict(x_c, y_c, x_grid).cov_np()


def _normal_sf(x):
    # P(Z > x) for standard normal
    return 0.5 * erfc(x / np.sqrt(2.0))


def event_probability(pred, threshold, mode, n_samples, rng):
    """Monte Carlo probability of a joint threshold event under the predictive.

    mode 'all_above': every target output exceeds the threshold;
    mode 'any_below': at least one falls below. For diagonal (mean-field)
    predictives the closed-form product of marginals is reported alongside,
    which is what an independence assumption would give.
    """
    if n_samples < 100:
        raise ValueError(f"n_samples must be >= 100, got {n_samples}")
    if mode not in ("all_above", "any_below"):
        raise ValueError(f"unknown mode {mode!r}")
    samples = sample_functions(pred, n_samples, rng)
    if mode == "all_above":
        hits = np.all(samples > threshold, axis=1)
    else:
        hits = np.any(samples < threshold, axis=1)
    p = float(np.mean(hits))
    se = float(np.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples))
    closed = None
    if isinstance(pred.cov, Diagonal):
        sd = np.sqrt(pred.marginal_var_np())
        above = _normal_sf((threshold - pred.mean_np()) / sd)
        closed = float(np.prod(above))
        if mode == "any_below":
            closed = 1.0 - closed
    return {"probability": p, "mc_se": se, "closed_form_product": closed}

"""Shared Cholesky-with-jitter policy.

Every Cholesky in the package (autodiff, oracle, sampling, data generation)
goes through the same escalation: try jitter 0, then 1e-10 * mean(diag),
multiplying by 10 on each retry, at most 5 retries.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dpotrf

JITTER_BASE = 1e-10
MAX_RETRIES = 5


class PositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed after the jitter escalation policy.

    ``pivot`` is the zero-based index of the first failing pivot.
    """

    def __init__(self, pivot, jitter, context=None):
        self.pivot = pivot
        self.jitter = jitter
        self.context = context
        message = (
            f"matrix not positive definite at pivot {pivot} "
            f"(last jitter tried: {jitter:g})"
        )
        if context:
            message += f" in {context}"
        super().__init__(message)


def cholesky_with_jitter(a):
    """Lower Cholesky factor of ``a``, escalating diagonal jitter on failure.

    Returns (L, jitter_used). Raises PositiveDefiniteError carrying the
    failing pivot index if the policy is exhausted.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    base = JITTER_BASE * float(np.mean(np.diagonal(a)))
    if base <= 0.0 or not np.isfinite(base):
        base = JITTER_BASE
    jitter = 0.0
    pivot = 0
    for attempt in range(MAX_RETRIES + 1):
        m = a if jitter == 0.0 else a + jitter * np.eye(n)
        c, info = dpotrf(m, lower=1, clean=1, overwrite_a=0)
        if info == 0:
            return c, jitter
        pivot = int(info) - 1
        jitter = base if jitter == 0.0 else jitter * 10.0
    raise PositiveDefiniteError(pivot, jitter / 10.0)

"""Gaussian neural processes for 1-D regression.

Meta-learning models that map a context set to a full multivariate Gaussian
over target outputs, with mean-field, low-rank (``linear``), and ``kvv``
covariance heads over DeepSet, attentive, and convolutional encoders, plus
exact-GP oracles, a synthetic task sampler, maximum-likelihood training, and
evaluation/sampling tooling.
"""

# Single-threaded BLAS: the workload is thousands of small-matrix ops per
# second, where thread-pool handoff costs far exceed the work (measured
# 20-40x slowdowns on 2-core hosts with default OpenBLAS threading).
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _threadpool_limits(1, user_api="blas")
except ImportError:  # pragma: no cover
    pass

from .kernels import KernelSpec
from .models import Model, ModelSpec
from .tasks import Dataset, TaskSpec
from .training import TrainConfig

__all__ = [
    "Dataset",
    "KernelSpec",
    "Model",
    "ModelSpec",
    "TaskSpec",
    "TrainConfig",
]

__version__ = "0.1.0"

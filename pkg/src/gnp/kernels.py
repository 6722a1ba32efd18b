"""Ground-truth covariance functions for the synthetic regression tasks.

Four stationary kernels over 1-D inputs: exponentiated quadratic, a
Matern-5/2 form, a two-lengthscale EQ mixture, and a weakly periodic kernel
(EQ times a periodic factor). These drive data generation and the exact-GP
oracle; they are plain float64 functions and never participate in autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KERNEL_KINDS = ("eq", "matern52", "noisy_mixture", "weakly_periodic")

_REQUIRED_PARAMS = {
    "eq": ("variance", "lengthscale"),
    "matern52": ("variance", "lengthscale"),
    "noisy_mixture": ("variance1", "lengthscale1", "variance2", "lengthscale2"),
    "weakly_periodic": ("variance", "lengthscale", "period", "periodic_lengthscale"),
}

DEFAULT_PARAMS = {
    "eq": {"variance": 1.0, "lengthscale": 1.0},
    "matern52": {"variance": 1.0, "lengthscale": 1.0},
    "noisy_mixture": {
        "variance1": 1.0,
        "lengthscale1": 1.0,
        "variance2": 1.0,
        "lengthscale2": 0.25,
    },
    "weakly_periodic": {
        "variance": 1.0,
        "lengthscale": 1.0,
        "period": 0.25,
        "periodic_lengthscale": 1.0,
    },
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel kind plus its named positive parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(
                f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}"
            )
        required = _REQUIRED_PARAMS[self.kind]
        missing = [k for k in required if k not in self.params]
        extra = [k for k in self.params if k not in required]
        if missing or extra:
            raise ValueError(
                f"kernel {self.kind!r}: missing params {missing}, unknown params {extra}"
            )
        for name, value in self.params.items():
            if not (float(value) > 0.0):
                raise ValueError(f"kernel param {name!r} must be > 0, got {value}")

    @classmethod
    def default(cls, kind):
        return cls(kind, dict(DEFAULT_PARAMS[kind]))

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"kind", "params"}
        if extra:
            raise ValueError(f"unknown kernel spec keys: {sorted(extra)}")
        return cls(d["kind"], dict(d.get("params", {})))


def _eq(r2, variance, lengthscale):
    return variance * np.exp(-0.5 * r2 / lengthscale**2)


def kernel_matrix(spec, xa, xb):
    """Gram matrix K[i, j] = k(xa[i], xb[j]) for 1-D inputs."""
    xa = np.asarray(xa, dtype=np.float64).reshape(-1)
    xb = np.asarray(xb, dtype=np.float64).reshape(-1)
    diff = xa[:, None] - xb[None, :]
    r2 = diff * diff
    p = spec.params
    if spec.kind == "eq":
        return _eq(r2, p["variance"], p["lengthscale"])
    if spec.kind == "matern52":
        r = np.abs(diff)
        s = r / p["lengthscale"]
        return p["variance"] * (1.0 + s + s * s / 3.0) * np.exp(-s)
    if spec.kind == "noisy_mixture":
        return _eq(r2, p["variance1"], p["lengthscale1"]) + _eq(
            r2, p["variance2"], p["lengthscale2"]
        )
    if spec.kind == "weakly_periodic":
        periodic = np.exp(
            -2.0
            * np.sin(np.pi * np.abs(diff) / p["period"]) ** 2
            / p["periodic_lengthscale"] ** 2
        )
        return _eq(r2, p["variance"], p["lengthscale"]) * periodic
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


def kernel_diag(spec, x):
    """k(x, x) for each input; equals the total variance, constant for all kinds."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    p = spec.params
    if spec.kind == "noisy_mixture":
        v = p["variance1"] + p["variance2"]
    else:
        v = p["variance"]
    return np.full(x.shape[0], v)

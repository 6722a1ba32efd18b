"""Synthetic meta-learning episode sampler and corpus persistence.

Episodes follow the standard protocol: N ~ Uniform{3..50} context points and
a fixed 50 targets, inputs i.i.d. uniform on [-2, 2], outputs drawn jointly
from the GP over the concatenated inputs, then i.i.d. observation noise with
variance 0.05^2 added to every output.

Randomness is counter-based (Philox4x32) with one independent stream per
episode: stream = (namespace << 48) | index, keyed together with the user
seed. Streams never share state, so corpora are reproducible and episode
generation is embarrassingly parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, kernel_matrix
from .linalg import cholesky_with_jitter

# stream namespaces (high 16 bits of the Philox stream id)
NS_CORPUS = 0
NS_INIT = 1
NS_TRAIN = 2
NS_EVAL = 3
NS_SAMPLE = 4

_MASK64 = (1 << 64) - 1


def stream_rng(seed, namespace, index):
    """Independent Philox generator for (seed, namespace, index)."""
    if index < 0 or index >= (1 << 48):
        raise ValueError(f"stream index out of range: {index}")
    stream = (namespace << 48) | index
    key = (seed & _MASK64) | (stream << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class Dataset:
    """One episode: context pairs and target pairs, all finite float64."""

    x_c: np.ndarray
    y_c: np.ndarray
    x_t: np.ndarray
    y_t: np.ndarray

    @property
    def n_context(self):
        return self.x_c.shape[0]

    @property
    def n_target(self):
        return self.x_t.shape[0]


@dataclass(frozen=True)
class TaskSpec:
    kernel: KernelSpec
    noise_var: float = 0.05**2
    n_context_range: tuple = (3, 50)
    n_target: int = 50
    x_range: tuple = (-2.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.n_context_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad context range {self.n_context_range}")
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError(f"bad x range {self.x_range}")
        if self.noise_var <= 0.0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "noise_var": self.noise_var,
            "n_context_range": list(self.n_context_range),
            "n_target": self.n_target,
            "x_range": list(self.x_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"kernel", "noise_var", "n_context_range", "n_target", "x_range", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown task spec keys: {sorted(extra)}")
        if "kernel" not in d:
            raise ValueError("task spec requires a 'kernel' entry")
        kw = {
            "kernel": KernelSpec.from_dict(d["kernel"]),
        }
        if "noise_var" in d:
            kw["noise_var"] = float(d["noise_var"])
        if "n_context_range" in d:
            kw["n_context_range"] = tuple(int(v) for v in d["n_context_range"])
        if "n_target" in d:
            kw["n_target"] = int(d["n_target"])
        if "x_range" in d:
            kw["x_range"] = tuple(float(v) for v in d["x_range"])
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        return cls(**kw)


def draw_joint_outputs(kernel, noise_var, x, rng):
    """Draw noisy GP outputs jointly over the given inputs.

    One standard-normal vector through the Cholesky factor of the Gram
    matrix, then independent observation noise. Separated out so moment
    tests can pin the input locations.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    k = kernel_matrix(kernel, x, x)
    l, _ = cholesky_with_jitter(k)
    f = l @ rng.standard_normal(x.shape[0])
    return f + np.sqrt(noise_var) * rng.standard_normal(x.shape[0])


def sample_episode(spec, rng):
    """One episode; draw order is fixed: N, x_c, x_t, latent GP, noise."""
    lo, hi = spec.n_context_range
    n = int(rng.integers(lo, hi + 1))
    x_lo, x_hi = spec.x_range
    x_c = rng.uniform(x_lo, x_hi, n)
    x_t = rng.uniform(x_lo, x_hi, spec.n_target)
    y = draw_joint_outputs(spec.kernel, spec.noise_var, np.concatenate([x_c, x_t]), rng)
    return Dataset(x_c=x_c, y_c=y[:n], x_t=x_t, y_t=y[n:])


def sample_batch(spec, batch_size, seed, namespace, start_index):
    """Independent episodes on consecutive streams from ``start_index``."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return [
        sample_episode(spec, stream_rng(seed, namespace, start_index + i))
        for i in range(batch_size)
    ]


def generate_corpus(spec, episodes, seed):
    """Fixed evaluation corpus: episode i is drawn on corpus stream i."""
    return sample_batch(spec, episodes, seed, NS_CORPUS, 0)


# ---------------------------------------------------------------------------
# corpus files: one JSON header line, then one JSON object per episode
# ---------------------------------------------------------------------------

def write_corpus(path, spec, episodes, seed):
    header = {"task": spec.to_dict(), "seed": seed, "count": len(episodes)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for ep in episodes:
            row = {
                "x_c": ep.x_c.tolist(),
                "y_c": ep.y_c.tolist(),
                "x_t": ep.x_t.tolist(),
                "y_t": ep.y_t.tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def read_corpus(path):
    """Returns (task_spec, seed, episodes)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        extra = set(header) - {"task", "seed", "count"}
        if extra:
            raise ValueError(f"unknown corpus header keys: {sorted(extra)}")
        spec = TaskSpec.from_dict(header["task"])
        episodes = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            episodes.append(
                Dataset(
                    x_c=np.asarray(row["x_c"], dtype=np.float64),
                    y_c=np.asarray(row["y_c"], dtype=np.float64),
                    x_t=np.asarray(row["x_t"], dtype=np.float64),
                    y_t=np.asarray(row["y_t"], dtype=np.float64),
                )
            )
    if len(episodes) != header["count"]:
        raise ValueError(
            f"corpus {path}: header count {header['count']} != {len(episodes)} episodes"
        )
    return spec, int(header["seed"]), episodes

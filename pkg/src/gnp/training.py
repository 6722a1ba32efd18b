"""Episode-based maximum-likelihood training with Adam.

Per iteration: sample a minibatch of fresh episodes, accumulate the gradient
of the mean negative log-likelihood by looping episodes on per-episode tapes
(no padding across variable context sizes), clip by global norm, and apply
one bias-corrected Adam step. Fully deterministic given the seed: episode
streams, parameter init, and the update rule contain no other randomness.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .heads import predictive_loglik
from .linalg import PositiveDefiniteError
from .tasks import NS_EVAL, NS_TRAIN, sample_episode, stream_rng


class TrainingDiverged(RuntimeError):
    """Loss or gradients went non-finite; carries the last good parameters."""

    def __init__(self, message, store, epoch, iteration):
        super().__init__(message)
        self.store = store
        self.epoch = epoch
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    iters_per_epoch: int = 256
    batch_size: int = 16
    learning_rate: float = 5e-4
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 5
    eval_episodes: int = 128
    clip_norm: float = 10.0

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    @classmethod
    def paper_scale(cls, **overrides):
        """The published protocol: 100 epochs x 1024 iterations, batch 16, lr 5e-4."""
        base = dict(epochs=100, iters_per_epoch=1024, batch_size=16,
                    learning_rate=5e-4)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "iters_per_epoch": self.iters_per_epoch,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_betas": list(self.adam_betas),
            "adam_eps": self.adam_eps,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
            "clip_norm": self.clip_norm,
        }

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown train config keys: {sorted(extra)}")
        kw = dict(d)
        if "adam_betas" in kw:
            kw["adam_betas"] = tuple(kw["adam_betas"])
        return cls(**kw)


class ParameterStore:
    """Named parameter arrays plus Adam moment buffers.

    Iteration order is always lexicographic by name, which fixes the
    checkpoint layout and makes update order deterministic.
    """

    def __init__(self, values):
        self.values = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.values.items()}

    def names(self):
        return sorted(self.values)

    def copy_values(self):
        return {k: v.copy() for k, v in self.values.items()}

    def n_parameters(self):
        return sum(v.size for v in self.values.values())


def adam_step(store, grads, cfg, t):
    """One bias-corrected Adam update; missing grads are treated as zero."""
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    b1, b2 = cfg.adam_betas
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in store.names():
        g = grads.get(name)
        if g is None:
            g = 0.0
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        store.values[name] -= cfg.learning_rate * update


def clip_by_global_norm(grads, max_norm):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def episode_grads(model, values, dataset):
    """(joint log-lik, grads of the log-lik by parameter name) for one episode."""
    tape = T.Tape()
    watched = {name: tape.watch(T.Tensor(arr)) for name, arr in values.items()}
    ll = model.loglik(watched, dataset)
    by_id = T.backward(ll)
    grads = {}
    for name, w in watched.items():
        g = by_id.get(w.node_id)
        if g is not None:
            grads[name] = g
    return float(ll.data), grads


def eval_mean_loglik(model, values, episodes):
    """(mean joint, mean per-point) log-lik over episodes, without a tape."""
    joint = []
    per_point = []
    for ep in episodes:
        pred = model.predict({k: T.Tensor(v) for k, v in values.items()},
                             ep.x_c, ep.y_c, ep.x_t)
        ll = float(predictive_loglik(pred, ep.y_t).data)
        joint.append(ll)
        per_point.append(ll / max(ep.n_target, 1))
    return float(np.mean(joint)), float(np.mean(per_point))


def train(model, task, cfg, eval_corpus=None, metrics_path=None, verbose=False):
    """Run the full loop; returns (store, metrics rows).

    ``eval_corpus``: held-out datasets scored every ``eval_every`` epochs
    (first ``cfg.eval_episodes`` of them); generated from the reserved eval
    stream when not supplied. Metrics rows are dicts matching the CSV
    columns epoch,iter,split,loglik_joint,loglik_per_point,loss;
    ``verbose`` echoes each row to stderr as it is produced.
    """
    store = ParameterStore(model.init_params(cfg.seed))
    if eval_corpus is None and cfg.eval_every > 0:
        eval_corpus = [
            sample_episode(task, stream_rng(cfg.seed, NS_EVAL, i))
            for i in range(cfg.eval_episodes)
        ]
    rows = []
    t = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_ll = 0.0
        epoch_pp = 0.0
        n_episodes = 0
        for it in range(cfg.iters_per_epoch):
            global_it = (epoch - 1) * cfg.iters_per_epoch + it
            grad_sum = {}
            batch_ll = 0.0
            for slot in range(cfg.batch_size):
                stream = global_it * cfg.batch_size + slot
                ep = sample_episode(task, stream_rng(cfg.seed, NS_TRAIN, stream))
                try:
                    ll, grads = episode_grads(model, store.values, ep)
                except PositiveDefiniteError as exc:
                    # surface the episode stream so the failure is replayable
                    raise PositiveDefiniteError(
                        exc.pivot,
                        exc.jitter,
                        context=f"training episode stream {stream} "
                                f"(seed {cfg.seed}, epoch {epoch}, iter {it})",
                    ) from exc
                batch_ll += ll
                epoch_pp += ll / max(ep.n_target, 1)
                for name, g in grads.items():
                    if name in grad_sum:
                        grad_sum[name] += g
                    else:
                        grad_sum[name] = g.copy()
            # loss = -(1/batch) * sum of joint log-liks
            loss_grads = {k: -g / cfg.batch_size for k, g in grad_sum.items()}
            batch_loss = -batch_ll / cfg.batch_size
            finite = np.isfinite(batch_loss) and all(
                np.all(np.isfinite(g)) for g in loss_grads.values()
            )
            if not finite:
                raise TrainingDiverged(
                    f"non-finite loss/gradients at epoch {epoch} iter {it} "
                    f"(episode streams {global_it * cfg.batch_size}.."
                    f"{global_it * cfg.batch_size + cfg.batch_size - 1})",
                    store, epoch, it,
                )
            loss_grads, _ = clip_by_global_norm(loss_grads, cfg.clip_norm)
            t += 1
            adam_step(store, loss_grads, cfg, t)
            epoch_ll += batch_ll
            n_episodes += cfg.batch_size
        rows.append({
            "epoch": epoch,
            "iter": t,
            "split": "train",
            "loglik_joint": epoch_ll / n_episodes,
            "loglik_per_point": epoch_pp / n_episodes,
            "loss": -epoch_ll / n_episodes,
        })
        if verbose:
            print(f"epoch {epoch:3d} train joint={rows[-1]['loglik_joint']:9.3f} "
                  f"per-point={rows[-1]['loglik_per_point']:7.4f}",
                  file=sys.stderr, flush=True)
        due = cfg.eval_every > 0 and (
            epoch % cfg.eval_every == 0 or epoch == cfg.epochs
        )
        if due and eval_corpus:
            subset = eval_corpus[: cfg.eval_episodes]
            joint, pp = eval_mean_loglik(model, store.values, subset)
            rows.append({
                "epoch": epoch,
                "iter": t,
                "split": "eval",
                "loglik_joint": joint,
                "loglik_per_point": pp,
                "loss": -joint,
            })
            if verbose:
                print(f"epoch {epoch:3d} eval  joint={joint:9.3f} "
                      f"per-point={pp:7.4f}", file=sys.stderr, flush=True)
    if metrics_path is not None:
        write_metrics(metrics_path, rows)
    return store, rows


METRICS_COLUMNS = ("epoch", "iter", "split", "loglik_joint", "loglik_per_point", "loss")


def write_metrics(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([
                row["epoch"], row["iter"], row["split"],
                repr(float(row["loglik_joint"])),
                repr(float(row["loglik_per_point"])),
                repr(float(row["loss"])),
            ])

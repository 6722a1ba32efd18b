"""Command-line operator surface.

Subcommands: generate, train, eval, sample, cov, event-prob. All configs are
JSON files validated strictly (unknown keys are hard errors); a few flags
override file values. Every run writes a ``<out>.manifest.json`` capturing
the resolved configuration, seeds, and SHA-256 hashes of the artifacts it
produced, so a run can be reproduced bit-exactly from its manifest.

Exit codes: 0 success, 1 usage/config error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evaluation import (
    EvaluationError,
    ModelPredictor,
    evaluate,
    evaluate_with_oracle,
    event_probability,
    extract_covariance,
    sample_functions,
)
from .linalg import PositiveDefiniteError
from .models import Model, ModelSpec
from .tasks import NS_SAMPLE, TaskSpec, generate_corpus, read_corpus, stream_rng, write_corpus
from .training import TrainConfig, TrainingDiverged, train, write_metrics

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command, argv, config, seeds, artifacts):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "artifacts": {p: _sha256(p) for p in artifacts},
    }
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--grid expects lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:n, got {text!r}")
    if n < 1 or not lo < hi:
        raise UsageError(f"--grid expects lo < hi and n >= 1, got {text!r}")
    return np.linspace(lo, hi, n)


def _write_matrix_csv(path, header_obj, matrix):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(header_obj) + "\n")
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _episode_from(args):
    _, _, episodes = read_corpus(args.corpus)
    if not 0 <= args.episode_index < len(episodes):
        raise UsageError(
            f"--episode-index {args.episode_index} out of range "
            f"(corpus has {len(episodes)} episodes)"
        )
    return episodes[args.episode_index]


def _build_parser():
    parser = _Parser(prog="gnp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a fixed episode corpus")
    p.add_argument("--task", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model, write checkpoint + metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--iters-per-epoch", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--verbose", action="store_true",
                   help="echo per-epoch metrics to stderr")

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="also score the exact and diagonalized oracles")

    p = sub.add_parser("sample", help="draw coherent function samples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--episode-index", type=int, required=True)
    p.add_argument("--grid", required=True, help="query locations, lo:hi:n (use --grid=-2:2:100 for negative lo)")
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cov", help="materialize the predictive covariance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--episode-index", type=int, required=True)
    p.add_argument("--grid", required=True, help="query locations, lo:hi:n (use --grid=-2:2:100 for negative lo)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("event-prob", help="probability of a joint threshold event")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--episode-index", type=int, required=True)
    p.add_argument("--grid", default=None,
                   help="query locations lo:hi:n (default: episode targets)")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--mode", choices=("all_above", "any_below"), required=True)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


def _cmd_generate(args, argv):
    spec_dict = _load_json(args.task)
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = TaskSpec.from_dict(spec_dict)
    if args.episodes < 1:
        raise UsageError(f"--episodes must be >= 1, got {args.episodes}")
    episodes = generate_corpus(spec, args.episodes, spec.seed)
    write_corpus(args.out, spec, episodes, spec.seed)
    _write_manifest(args.out, "generate", argv,
                    {"task": spec.to_dict(), "episodes": args.episodes},
                    {"corpus": spec.seed}, [args.out])
    return EXIT_OK


def _cmd_train(args, argv):
    model_spec = ModelSpec.from_dict(_load_json(args.model))
    task = TaskSpec.from_dict(_load_json(args.task))
    cfg_dict = _load_json(args.config)
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "iters_per_epoch": args.iters_per_epoch,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg_dict[key] = value
    cfg = TrainConfig.from_dict(cfg_dict)
    model = Model(model_spec)
    try:
        store, rows = train(model, task, cfg, metrics_path=args.metrics,
                            verbose=args.verbose)
    except TrainingDiverged as exc:
        # retain the last-good parameters so the run can be inspected
        save_checkpoint(args.out, model_spec, exc.store.values)
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(args.out, model_spec, store.values)
    _write_manifest(args.out, "train", argv,
                    {"model": model_spec.to_dict(), "task": task.to_dict(),
                     "train": cfg.to_dict()},
                    {"train": cfg.seed},
                    [args.out, args.metrics])
    return EXIT_OK


def _cmd_eval(args, argv):
    spec, values = load_checkpoint(args.ckpt)
    task, corpus_seed, episodes = read_corpus(args.corpus)
    predictor = ModelPredictor(Model(spec), values)
    if args.oracle:
        summary = evaluate_with_oracle(predictor, task, episodes)
    else:
        summary = {"model": evaluate(predictor, episodes)}
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "eval", argv,
                    {"model": spec.to_dict(), "task": task.to_dict(),
                     "oracle": bool(args.oracle)},
                    {"corpus": corpus_seed}, [args.out])
    return EXIT_OK


def _cmd_sample(args, argv):
    spec, values = load_checkpoint(args.ckpt)
    episode = _episode_from(args)
    grid = _parse_grid(args.grid)
    predictor = ModelPredictor(Model(spec), values)
    pred = predictor.predict(episode.x_c, episode.y_c, grid)
    rng = stream_rng(args.seed, NS_SAMPLE, 0)
    samples = sample_functions(pred, args.n_samples, rng, noiseless=args.noiseless)
    _write_matrix_csv(args.out, {"x_grid": grid.tolist()}, samples)
    _write_manifest(args.out, "sample", argv,
                    {"model": spec.to_dict(), "episode_index": args.episode_index,
                     "n_samples": args.n_samples, "noiseless": bool(args.noiseless)},
                    {"sampling": args.seed}, [args.out])
    return EXIT_OK


def _cmd_cov(args, argv):
    spec, values = load_checkpoint(args.ckpt)
    episode = _episode_from(args)
    grid = _parse_grid(args.grid)
    predictor = ModelPredictor(Model(spec), values)
    cov = extract_covariance(predictor, episode.x_c, episode.y_c, grid)
    _write_matrix_csv(args.out, {"x_grid": grid.tolist()}, cov)
    _write_manifest(args.out, "cov", argv,
                    {"model": spec.to_dict(), "episode_index": args.episode_index},
                    {}, [args.out])
    return EXIT_OK


def _cmd_event_prob(args, argv):
    spec, values = load_checkpoint(args.ckpt)
    episode = _episode_from(args)
    x_query = _parse_grid(args.grid) if args.grid else episode.x_t
    predictor = ModelPredictor(Model(spec), values)
    pred = predictor.predict(episode.x_c, episode.y_c, x_query)
    rng = stream_rng(args.seed, NS_SAMPLE, 0)
    result = event_probability(pred, args.threshold, args.mode, args.n_samples, rng)
    result.update({"threshold": args.threshold, "mode": args.mode,
                   "n_samples": args.n_samples})
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "event-prob", argv,
                    {"model": spec.to_dict(), "episode_index": args.episode_index,
                     "threshold": args.threshold, "mode": args.mode},
                    {"sampling": args.seed}, [args.out])
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sample": _cmd_sample,
    "cov": _cmd_cov,
    "event-prob": _cmd_event_prob,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except (PositiveDefiniteError, FloatingPointError, EvaluationError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: data generation, training, inference, scoring, diagnostics.

Every subcommand is reproducible from its config and seed alone; the optional
``WTFLOW_SEED`` environment variable overrides the seed and is the only
environment dependence. Exit codes: 0 success, 1 usage error, 2 data/format
error, 3 numerical abort. Each run prints a one-line JSON summary to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .data import (ContainerError, SCENARIO_NAMES, gen_scenario,
                   read_container, write_container)
from .diag import (annulus_fraction, initial_radial_stats, kl_perturbation_curve,
                   marginal_field_oracle, radius_bound_check, trajectory_norm_table)
from .flow import IntegrationError, integrate_batch
from .model import TimeEmbedConfig
from .numcore import RandomStream, Tensor
from .paths import DEFAULT_T_MIN, PathKind, PathSpec
from .score import anomaly_map, auroc, topk_image_score
from .train import TrainConfig, TrainingDivergedError, train
from .wtmap import apply_wt

__all__ = ["main", "RunConfig"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """JSON-backed run configuration; unknown keys are rejected.

    The defaults are the full-scale training settings; 2-D toys usually
    override batch_size/max_steps/learning_rate (see README).
    """

    seed: int = 0
    direction: str = "reverse_rf"
    wt_enabled: bool = True
    wt_eps: float = 1e-5
    wt_mode: str = "per_channel"
    hidden_widths: tuple[int, ...] = (256, 256)
    activation: str = "silu"
    time_embed_dim: int = 64
    omega_min: float = 1.0
    omega_max: float = 1000.0
    learning_rate: float = 2e-4
    weight_decay: float = 0.1
    epochs: int = 100
    batch_size: int = 8
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.1
    max_steps: int | None = None
    t_min: float = DEFAULT_T_MIN
    train_container: str = "train.ftc"
    out_dir: str = "out"

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "hidden_widths" in doc:
            doc["hidden_widths"] = tuple(int(w) for w in doc["hidden_widths"])
        return cls(**doc)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_decay_every=self.lr_decay_every,
            lr_decay_factor=self.lr_decay_factor,
            seed=self.seed,
            direction=PathKind(self.direction),
            wt_enabled=self.wt_enabled,
            wt_eps=self.wt_eps,
            wt_mode=self.wt_mode,
            hidden=self.hidden_widths,
            activation=self.activation,
            time_embed=TimeEmbedConfig(dim=self.time_embed_dim,
                                       omega_min=self.omega_min,
                                       omega_max=self.omega_max),
            max_steps=self.max_steps,
        )


def _seed_override(seed: int) -> int:
    env = os.environ.get("WTFLOW_SEED")
    return int(env) if env is not None else seed


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _read_labels(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "label" not in reader.fieldnames:
            raise ValueError(f"labels file {path} needs a 'label' column")
        labels = [int(row["label"]) for row in reader]
    return np.asarray(labels, dtype=np.int64)


def _per_image_views(container: np.ndarray):
    """Yield one feature block per image: rows of (N, d) or maps of (N, C, H, W)."""
    if container.ndim == 2:
        for i in range(container.shape[0]):
            yield container[i]
    elif container.ndim == 4:
        for i in range(container.shape[0]):
            yield container[i]
    else:
        raise ValueError(
            f"expected a (N, d) or (N, C, H, W) container, got {container.shape}")


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    seed = _seed_override(args.seed)
    scenario = gen_scenario(args.scenario, args.n_train, args.n_test, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_container(out / "train.ftc", scenario.train)
    write_container(out / "test.ftc", scenario.test)
    _write_csv(out / "labels.csv", ["image_id", "label"],
               [(i, int(l)) for i, l in enumerate(scenario.labels)])
    _emit({"command": "gen-data", "scenario": args.scenario, "seed": seed,
           "n_train": int(scenario.train.shape[0]),
           "n_test": int(scenario.test.shape[0]), "out": str(out)})
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = RunConfig.from_json(args.config)
    cfg = RunConfig(**{**asdict(cfg), "seed": _seed_override(cfg.seed)})
    data = read_container(cfg.train_container)
    if data.ndim == 4:
        n, c = data.shape[0], data.shape[1]
        data = data.reshape(n, c, -1).transpose(0, 2, 1).reshape(-1, c)
    result = train(np.asarray(data, dtype=np.float64), cfg.train_config())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.ckpt"
    with open(ckpt_path, "wb") as fh:
        fh.write(result.checkpoint)
    _write_csv(out / "loss.csv", ["epoch", "mean_loss"],
               list(enumerate(result.epoch_losses)))
    _emit({"command": "train", "seed": cfg.seed, "steps": result.steps,
           "epochs": len(result.epoch_losses),
           "final_loss": result.epoch_losses[-1],
           "checkpoint": str(ckpt_path)})
    return EXIT_OK


def _cmd_infer(args) -> int:
    model, wt, _spec = read_checkpoint(args.ckpt)
    container = read_container(args.input)
    if container.ndim == 4:
        n, c, h, w = container.shape
        vectors = container.reshape(n, c, -1).transpose(0, 2, 1).reshape(-1, c)
    elif container.ndim == 2:
        vectors = np.asarray(container, dtype=np.float64)
    else:
        raise ValueError(f"unsupported input layout {container.shape}")
    start = apply_wt(Tensor(vectors), wt).data if wt is not None else vectors
    traj = integrate_batch(start, model, n_steps=args.steps, record=args.record)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    endpoints = traj.terminal
    if container.ndim == 4:
        endpoints = endpoints.reshape(n, h * w, c).transpose(0, 2, 1).reshape(n, c, h, w)
    write_container(out / "endpoints.ftc", endpoints)
    summary = {"command": "infer", "steps": args.steps,
               "samples": int(vectors.shape[0]),
               "endpoints": str(out / "endpoints.ftc")}
    if args.record:
        d = vectors.shape[1]
        keep = min(d, args.max_dump_dims)
        header = ["sample_id", "step", "t", "norm"] + [f"x_{k}" for k in range(keep)]
        rows = []
        for i in range(traj.states.shape[1]):
            for j, t in enumerate(traj.times):
                state = traj.states[j, i]
                rows.append([i, j, float(t), float(traj.norms[j, i]),
                             *[float(v) for v in state[:keep]]])
        _write_csv(out / "trajectories.csv", header, rows)
        summary["trajectories"] = str(out / "trajectories.csv")
    _emit(summary)
    return EXIT_OK


def _cmd_score(args) -> int:
    model, wt, _spec = read_checkpoint(args.ckpt)
    container = read_container(args.input)
    labels = _read_labels(args.labels)
    images = list(_per_image_views(container))
    if len(images) != labels.size:
        raise ValueError(
            f"{len(images)} images but {labels.size} labels")
    if len(np.unique(labels)) < 2:
        raise ValueError("labels contain a single class; AUROC is undefined")
    if container.ndim == 2:
        # each row is a one-location image: score the whole batch in one pass
        flat = anomaly_map(np.asarray(container, dtype=np.float64), model, wt,
                           n_steps=args.steps, mode=args.mode)
        scores = [topk_image_score(flat[i:i + 1], k_frac=args.kfrac)
                  for i in range(flat.size)]
        maps = flat.reshape(-1, 1, 1)
    else:
        scores, map_list = [], []
        for feats in images:
            amap = anomaly_map(feats, model, wt, n_steps=args.steps, mode=args.mode)
            scores.append(topk_image_score(amap, k_frac=args.kfrac))
            map_list.append(amap)
        maps = np.stack(map_list)
    value = auroc(np.asarray(scores), labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_container(out / "maps.ftc", maps)
    _write_csv(out / "scores.csv", ["image_id", "label", "image_score"],
               [(i, int(l), float(s)) for i, (l, s) in enumerate(zip(labels, scores))])
    with open(out / "auroc.json", "w", encoding="utf-8") as fh:
        json.dump({"auroc": value, "mode": args.mode, "steps": args.steps,
                   "k_frac": args.kfrac, "n_images": len(images)}, fh, sort_keys=True)
    _emit({"command": "score", "auroc": value, "mode": args.mode,
           "steps": args.steps, "scores": str(out / "scores.csv")})
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.diagnostic

    if kind == "annulus":
        frac = annulus_fraction(args.dim, args.samples, args.beta,
                                RandomStream(_seed_override(args.seed)))
        _write_csv(out / "annulus.csv", ["dim", "samples", "beta", "fraction"],
                   [(args.dim, args.samples, float(args.beta), frac)])
        _emit({"command": "diagnose", "diagnostic": "annulus", "fraction": frac})
    elif kind == "kl":
        eps = [float(e) for e in args.eps_list.split(",")]
        curve = kl_perturbation_curve(args.mu, args.var, eps)
        _write_csv(out / "kl.csv", ["eps", "kl"],
                   list(zip(curve.eps.tolist(), curve.kl.tolist())))
        _emit({"command": "diagnose", "diagnostic": "kl", "slope": curve.slope})
    elif kind == "marginal":
        dataset = np.asarray(read_container(args.input), dtype=np.float64)
        spec = PathSpec(PathKind(args.kind), epsilon=args.epsilon)
        queries = (np.asarray([[float(v) for v in args.query.split(",")]])
                   if args.query else dataset)
        d = dataset.shape[1]
        rows = []
        for q in queries:
            field = marginal_field_oracle(q, args.t, dataset, spec)
            rows.append([*map(float, q), *map(float, field)])
        header = [f"x_{k}" for k in range(d)] + [f"u_{k}" for k in range(d)]
        _write_csv(out / "marginal.csv", header, rows)
        _emit({"command": "diagnose", "diagnostic": "marginal",
               "queries": len(rows), "t": args.t})
    elif kind == "normtable":
        model, wt, _spec = read_checkpoint(args.ckpt)
        container = np.asarray(read_container(args.input), dtype=np.float64)
        if container.ndim != 2:
            raise ValueError("normtable expects a (N, d) container")
        mapped = apply_wt(Tensor(container), wt).data if wt is not None else container
        if args.labels:
            labels = _read_labels(args.labels)
            datasets = {}
            if np.any(labels == 0):
                datasets["normal"] = mapped[labels == 0]
            if np.any(labels == 1):
                datasets["anomalous"] = mapped[labels == 1]
        else:
            datasets = {"all": mapped}
        table = trajectory_norm_table(model, datasets, n_steps=args.steps)
        header = ["class"] + [f"step_{g}" for g in table.grid] + ["argmin_step"]
        rows = [[name, *[float(v) for v in table.means[i]],
                 table.grid[table.argmin[i]]]
                for i, name in enumerate(table.classes)]
        _write_csv(out / "normtable.csv", header, rows)
        _emit({"command": "diagnose", "diagnostic": "normtable",
               "classes": table.classes,
               "argmin_steps": [table.grid[m] for m in table.argmin]})
    elif kind == "radial":
        model, wt, _spec = read_checkpoint(args.ckpt)
        container = np.asarray(read_container(args.input), dtype=np.float64)
        if container.ndim != 2:
            raise ValueError("radial expects a (N, d) container")
        mapped = apply_wt(Tensor(container), wt).data if wt is not None else container
        stats = initial_radial_stats(model, mapped)
        _write_csv(out / "radial.csv",
                   ["mean_radial", "fraction_inward", "n_used", "n_skipped"],
                   [(stats.mean_radial, stats.fraction_inward,
                     stats.n_used, stats.n_skipped)])
        _emit({"command": "diagnose", "diagnostic": "radial",
               "mean_radial": stats.mean_radial,
               "fraction_inward": stats.fraction_inward})
    elif kind == "radius-bound":
        report = radius_bound_check(read_container(args.input))
        _write_csv(out / "radius_bound.csv", ["max_norm", "bound", "violation"],
                   [(report.max_norm, report.bound, int(report.violation))])
        _emit({"command": "diagnose", "diagnostic": "radius-bound",
               "max_norm": report.max_norm, "bound": report.bound,
               "violation": report.violation})
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown diagnostic {kind!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly.
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="wtflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on worker threads (current pipeline is sequential)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a toy scenario")
    p.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=512)
    p.add_argument("--n-test", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a vector-field model")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="integrate samples through a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--record", action="store_true")
    p.add_argument("--max-dump-dims", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("score", help="anomaly-score a test container")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", choices=("wt", "rfm"), default="wt")
    p.add_argument("--kfrac", type=float, default=0.03)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("diagnose", help="run a geometric diagnostic")
    diag_sub = p.add_subparsers(dest="diagnostic", required=True)

    q = diag_sub.add_parser("annulus")
    q.add_argument("--dim", type=int, required=True)
    q.add_argument("--samples", type=int, default=100000)
    q.add_argument("--beta", type=float, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    q = diag_sub.add_parser("kl")
    q.add_argument("--mu", type=float, default=0.0)
    q.add_argument("--var", type=float, default=4.0)
    q.add_argument("--eps-list", default="0.001,0.003162,0.01,0.03162,0.1")
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    q = diag_sub.add_parser("marginal")
    q.add_argument("--input", required=True)
    q.add_argument("--t", type=float, required=True)
    q.add_argument("--kind", choices=[k.value for k in PathKind],
                   default="forward_rf")
    q.add_argument("--epsilon", type=float, default=0.0)
    q.add_argument("--query", default=None,
                   help="comma-separated point; defaults to the dataset points")
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    q = diag_sub.add_parser("normtable")
    q.add_argument("--ckpt", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--labels", default=None)
    q.add_argument("--steps", type=int, default=50)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    q = diag_sub.add_parser("radial")
    q.add_argument("--ckpt", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    q = diag_sub.add_parser("radius-bound")
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("usage error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ContainerError, CheckpointError, FileNotFoundError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, IntegrationError, FloatingPointError,
            RuntimeError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

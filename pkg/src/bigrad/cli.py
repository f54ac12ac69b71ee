"""Command-line entry point: ``bigrad run``, ``bigrad sweep``, ``bigrad fixtures``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import DEFAULT_ALPHAS, EXPERIMENTS, OPTIMIZERS, ExperimentConfig, alpha_sweep, run_experiment, write_metrics
from .data import synth_sparse_binary, write_mnist_sample, write_sparse_text
from .errors import BigradError, ConfigError, DataFileError

# CLI flag -> ExperimentConfig key, for flags given explicitly on the command line.
_CONFIG_FLAGS = (
    "experiment", "optimizer", "alpha", "epochs", "batch_size", "seed", "subset", "val_subset_size",
    "mnist_dir", "sparse_train", "sparse_valid", "sparse_dim", "dropout", "abs_reset", "n0", "p0",
    "early_stop", "lr", "beta1", "beta2", "eps", "momentum_coef", "decay",
)


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--alpha", type=float, help="interval factor (bsg only)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--subset", type=int, help="train examples kept after a seeded shuffle")
    p.add_argument("--val-subset-size", type=int)
    p.add_argument("--mnist-dir")
    p.add_argument("--sparse-train")
    p.add_argument("--sparse-valid")
    p.add_argument("--sparse-dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--abs-reset", action="store_true", default=None)
    p.add_argument("--n0", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--early-stop", action="store_true", default=None)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--momentum-coef", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--out", required=True, help="metrics output path")
    p.add_argument("--format", choices=("csv", "json"), help="defaults to the --out suffix, else csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bigrad", description="BSG optimizer benchmarks")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _experiment_args(run)

    sweep = sub.add_parser("sweep", help="run one BSG experiment per interval factor")
    _experiment_args(sweep)
    sweep.add_argument("--alphas", default=",".join(f"{a:g}" for a in DEFAULT_ALPHAS),
                       help="comma-separated interval factors; --out gets an _alpha<value> suffix per run")

    fx = sub.add_parser("fixtures", help="write data files usable by the experiments")
    fx_sub = fx.add_subparsers(dest="fixture", required=True)
    mn = fx_sub.add_parser("mnist-sample", help="5,000-digit MNIST sample (needs mlxtend) as IDX files")
    mn.add_argument("--out", required=True, help="output directory")
    mn.add_argument("--validation", type=int, default=1000)
    mn.add_argument("--seed", type=int, default=0)
    sp = fx_sub.add_parser("sparse", help="synthetic bag-of-words binary task in sparse text format")
    sp.add_argument("--out-train", required=True)
    sp.add_argument("--out-valid", required=True)
    sp.add_argument("--train", type=int, default=2000)
    sp.add_argument("--valid", type=int, default=500)
    sp.add_argument("--dim", type=int, default=10_000)
    sp.add_argument("--nnz", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args, default_alpha=None) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DataFileError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if default_alpha is not None and raw.get("alpha") is None and raw.get("optimizer", "bsg") == "bsg":
        raw["alpha"] = default_alpha
    return ExperimentConfig.from_dict(raw)


def _format(args) -> str:
    if args.format:
        return args.format
    return "json" if str(args.out).endswith(".json") else "csv"


def _sweep_path(out: str, alpha: float) -> Path:
    path = Path(out)
    return path.with_name(f"{path.stem}_alpha{alpha:g}{path.suffix}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixtures":
            if args.fixture == "mnist-sample":
                sizes = write_mnist_sample(args.out, args.validation, args.seed)
                print(f"wrote MNIST sample to {args.out}: {sizes}")
            else:
                X, y = synth_sparse_binary(args.seed, args.train + args.valid, args.dim, args.nnz)
                write_sparse_text(args.out_train, X[:args.train], y[:args.train])
                write_sparse_text(args.out_valid, X[args.train:], y[args.train:])
                print(f"wrote {args.train} train / {args.valid} validation rows")
            return 0

        if args.command == "run":
            cfg = config_from_args(args)
            table = run_experiment(cfg)
            write_metrics(table, args.out, _format(args))
            last = table.rows[-2]
            print(f"{cfg.experiment} {cfg.optimizer}: epoch {last.epoch} train loss {last.loss:.6g} "
                  f"accuracy {last.accuracy:.4f} -> {args.out}")
            return 0

        try:
            alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse --alphas {args.alphas!r}") from None
        if not alphas:
            raise ConfigError("--alphas is empty")
        cfg = config_from_args(args, default_alpha=alphas[0])
        tables = alpha_sweep(cfg, alphas)
        for alpha, table in tables.items():
            path = _sweep_path(args.out, alpha)
            write_metrics(table, path, _format(args))
            last = table.rows[-2]
            print(f"alpha={alpha:g}: epoch {last.epoch} train loss {last.loss:.6g} accuracy {last.accuracy:.4f} -> {path}")
        return 0
    except BigradError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

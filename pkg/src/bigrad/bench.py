"""Benchmark harness: train a model with BSG or a baseline and record per-epoch metrics."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bsg import BsgConfig, bsg_init, bsg_step
from .data import Dataset, load_mnist, load_sparse_text, synth_sparse_binary
from .errors import ConfigError, DataFileError, DivergenceError, NonFiniteError
from .inner import InnerHyper, init_inner_state, inner_update
from .models import (
    Batch,
    accuracy,
    init_mlp,
    init_sigmoid,
    init_softmax,
    mlp_model,
    sigmoid_model,
    softmax_model,
)
from .tensor import RngState, rng_permutation

log = logging.getLogger(__name__)

EXPERIMENTS = ("logreg-mnist", "logreg-sparse", "mlp-mnist", "surface-1d", "surface-rosenbrock", "alpha-sweep")
OPTIMIZERS = ("bsg", "adam", "sgd", "momentum", "rmsprop")
SURFACES = ("surface-1d", "surface-rosenbrock")
METRIC_COLUMNS = ("epoch", "split", "loss", "accuracy", "wall_ms", "steps")
DEFAULT_ALPHAS = (0.5, 1.0, 2.0, 5.0, 10.0)
# Early stop: every |u| below this for this many consecutive steps.
STALL_U = 1e-12
STALL_STEPS = 10


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "logreg-mnist"
    optimizer: str = "bsg"
    alpha: float | None = None
    inner: InnerHyper = field(default_factory=InnerHyper)
    epochs: int = 20
    batch_size: int = 128
    seed: int = 7
    subset_size: int | None = 10_000
    val_subset_size: int | None = 2_000
    mnist_dir: str | None = "data/mnist"
    sparse_train: str | None = None
    sparse_valid: str | None = None
    sparse_dim: int = 10_000
    dropout: float = 0.5
    abs_reset: bool = False
    n0: float = 100.0
    p0: float = 0.0
    early_stop: bool = False
    x0: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer == "bsg" and self.alpha is None:
            raise ConfigError("optimizer 'bsg' needs an interval factor (alpha)")
        if self.optimizer != "bsg" and self.alpha is not None:
            raise ConfigError(f"alpha only applies to optimizer 'bsg', not {self.optimizer!r}")
        if self.optimizer != "bsg" and self.inner.kind != self.optimizer:
            object.__setattr__(self, "inner", replace(self.inner, kind=self.optimizer))
        for name in ("subset_size", "val_subset_size"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.optimizer == "bsg":
            self.bsg_config()  # validates alpha / n0 / p0

    def bsg_config(self) -> BsgConfig:
        return BsgConfig(alpha=self.alpha, n0=self.n0, p0=self.p0, abs_reset=self.abs_reset)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = {k.replace("-", "_"): v for k, v in raw.items()}
        if "subset" in raw:
            raw["subset_size"] = raw.pop("subset")
        inner = raw.pop("inner", None) or {}
        for key in ("lr", "beta1", "beta2", "eps", "momentum_coef", "decay"):
            if key in raw:
                inner[key] = raw.pop(key)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if raw.get("x0") is not None:
            raw["x0"] = tuple(float(v) for v in raw["x0"])
        try:
            return cls(inner=InnerHyper(**inner), **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["inner"] = asdict(self.inner)
        return out


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    split: str
    loss: float
    accuracy: float
    wall_ms: float
    steps: int


@dataclass
class MetricsTable:
    rows: list[MetricsRow] = field(default_factory=list)
    # Run diagnostics that are not part of the written metrics.
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        epochs = [r.epoch for r in self.rows if r.split == "train"]
        if epochs != list(range(1, len(epochs) + 1)):
            raise ConfigError("train rows must cover epochs 1..N contiguously")
        val = [r.epoch for r in self.rows if r.split == "validation"]
        if val != epochs or len(self.rows) != 2 * len(epochs):
            raise ConfigError("need exactly one train and one validation row per epoch")

    def series(self, split: str = "train", column: str = "accuracy") -> list:
        return [getattr(r, column) for r in self.rows if r.split == split]

    def epochs_to(self, threshold: float, split: str = "train") -> int | None:
        """First epoch whose accuracy reaches ``threshold``; None if never."""
        for r in self.rows:
            if r.split == split and r.accuracy >= threshold:
                return r.epoch
        return None

    def deterministic_rows(self) -> list[tuple]:
        return [(r.epoch, r.split, r.loss, r.accuracy, r.steps) for r in self.rows]


# -- optimizers over parameter dicts --------------------------------------------


class ParamOptimizer:
    """Holds one optimizer state per parameter tensor and applies steps."""

    def __init__(self, params: dict, cfg: ExperimentConfig):
        self.use_bsg = cfg.optimizer == "bsg"
        self.hyper = cfg.inner
        if self.use_bsg:
            bsg_cfg = cfg.bsg_config()
            self.states = {k: bsg_init(v.shape, bsg_cfg, self.hyper) for k, v in params.items()}
        else:
            self.states = {k: init_inner_state(v.shape, self.hyper) for k, v in params.items()}
        self.max_abs_u = math.inf

    def step(self, params: dict, grads: dict) -> dict:
        out, largest = {}, 0.0
        for name, value in params.items():
            state = self.states[name]
            if self.use_bsg:
                out[name] = bsg_step(value, grads[name], state, self.hyper)
                u = state.last_u
            else:
                u = inner_update(state, grads[name], self.hyper)
                out[name] = value - u
                if not np.all(np.isfinite(out[name])):
                    raise NonFiniteError(f"parameter {name} became non-finite")
            largest = max(largest, float(np.max(np.abs(u))))
        self.max_abs_u = largest
        return out

    @property
    def inverted_resets(self) -> int:
        if not self.use_bsg:
            return 0
        return sum(s.inverted_resets for s in self.states.values())


# -- experiment assembly ---------------------------------------------------------


def _subset(ds: Dataset, size: int | None, rng: RngState) -> Dataset:
    return ds.take(rng_permutation(rng, len(ds))[:size])


def _load_task(cfg: ExperimentConfig, rng: RngState):
    task = cfg.experiment
    if task in ("logreg-mnist", "mlp-mnist"):
        if cfg.mnist_dir is None:
            raise DataFileError("MNIST experiments need mnist_dir")
        train = load_mnist(cfg.mnist_dir, "train")
        valid = load_mnist(cfg.mnist_dir, "validation")
        train = _subset(train, cfg.subset_size, rng.split("subset", "train"))
        valid = _subset(valid, cfg.val_subset_size, rng.split("subset", "validation"))
        d = train.X.shape[1]
        if task == "logreg-mnist":
            return softmax_model(), init_softmax(d, 10, rng.split("init")), train, valid
        return mlp_model(), init_mlp(d, 10, rng.split("init")), train, valid
    if task == "logreg-sparse":
        if (cfg.sparse_train is None) != (cfg.sparse_valid is None):
            raise ConfigError("give both sparse_train and sparse_valid, or neither for the synthetic task")
        if cfg.sparse_train is not None:
            Xt, yt = load_sparse_text(cfg.sparse_train, cfg.sparse_dim)
            Xv, yv = load_sparse_text(cfg.sparse_valid, cfg.sparse_dim)
        else:
            Xt, yt = synth_sparse_binary(cfg.seed, SPARSE_SYNTH_TRAIN + SPARSE_SYNTH_VALID, cfg.sparse_dim)
            Xv, yv = Xt[SPARSE_SYNTH_TRAIN:], yt[SPARSE_SYNTH_TRAIN:]
            Xt, yt = Xt[:SPARSE_SYNTH_TRAIN], yt[:SPARSE_SYNTH_TRAIN]
        train = _subset(Dataset(Xt, yt, "train"), cfg.subset_size, rng.split("subset", "train"))
        valid = _subset(Dataset(Xv, yv, "validation"), cfg.val_subset_size, rng.split("subset", "validation"))
        model = sigmoid_model(cfg.dropout)
        return model, init_sigmoid(cfg.sparse_dim, rng.split("init")), train, valid
    raise ConfigError(f"experiment {task!r} has no dataset")


SPARSE_SYNTH_TRAIN = 2000
SPARSE_SYNTH_VALID = 500


def _evaluate(model, params, ds: Dataset, epoch, step):
    batch = Batch(ds.X, ds.y)
    try:
        loss = model.loss(params, batch)
        acc = accuracy(model.logits(params, ds.X), ds.y)
    except NonFiniteError as exc:
        raise DivergenceError(epoch, step, f"{ds.split} evaluation: {exc}") from exc
    if not math.isfinite(loss):
        raise DivergenceError(epoch, step, f"non-finite {ds.split} loss")
    return loss, acc


def _run_data(cfg: ExperimentConfig) -> MetricsTable:
    rng = RngState(cfg.seed)
    model, params, train, valid = _load_task(cfg, rng)
    opt = ParamOptimizer(params, cfg)
    table = MetricsTable()
    initial_loss, _ = _evaluate(model, params, train, 0, 0)
    table.meta["initial_loss"] = initial_loss
    log.info("initial train loss %.9g", initial_loss)

    start = time.perf_counter()
    step, stalled = 0, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng_permutation(rng.split("shuffle", epoch), len(train))
        for lo in range(0, len(train), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            if step == 0:
                table.meta["first_batch"] = idx.tolist()
                log.info("first batch indices %s", idx[:16].tolist())
            batch = Batch(train.X[idx], train.y[idx])
            try:
                loss, grads = model.eval(params, batch, rng.split("dropout", step))
                if not math.isfinite(loss):
                    raise NonFiniteError("non-finite batch loss")
                params = opt.step(params, grads)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, step + 1, str(exc)) from exc
            step += 1
            stalled = stalled + 1 if opt.max_abs_u < STALL_U else 0
            if cfg.early_stop and stalled >= STALL_STEPS:
                break
        wall_ms = (time.perf_counter() - start) * 1e3
        for ds in (train, valid):
            loss, acc = _evaluate(model, params, ds, epoch, step)
            table.rows.append(MetricsRow(epoch, ds.split, loss, acc, wall_ms, step))
        log.debug("epoch %d train acc %.4f", epoch, table.rows[-2].accuracy)
        if cfg.early_stop and stalled >= STALL_STEPS:
            table.meta["stopped_early"] = epoch
            break
    table.meta["inverted_resets"] = opt.inverted_resets
    table.meta["params"] = params
    return table


# -- analytic surfaces -------------------------------------------------------------


def _surface(name):
    if name == "surface-1d":
        return (lambda x: float(x[0] ** 2)), (lambda x: 2.0 * x), (0.5,)

    def loss(x):
        return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)

    def grad(x):
        return np.array([
            -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
            200 * (x[1] - x[0] ** 2),
        ])

    return loss, grad, (-1.2, 1.0)


def _run_surface(cfg: ExperimentConfig) -> MetricsTable:
    """One epoch is one optimizer step; the accuracy column holds the gradient inf-norm."""
    loss_fn, grad_fn, default_x0 = _surface(cfg.experiment)
    x0 = np.array(cfg.x0 if cfg.x0 is not None else default_x0, dtype=np.float64)
    params = {"x": x0}
    opt = ParamOptimizer(params, cfg)
    table = MetricsTable(meta={"initial_loss": loss_fn(x0)})
    start = time.perf_counter()
    stalled = 0
    for epoch in range(1, cfg.epochs + 1):
        try:
            params = opt.step(params, {"x": grad_fn(params["x"])})
        except NonFiniteError as exc:
            raise DivergenceError(epoch, epoch, str(exc)) from exc
        x = params["x"]
        loss = loss_fn(x)
        gnorm = float(np.max(np.abs(grad_fn(x))))
        if not (math.isfinite(loss) and math.isfinite(gnorm)):
            raise DivergenceError(epoch, epoch)
        wall_ms = (time.perf_counter() - start) * 1e3
        for split in ("train", "validation"):
            table.rows.append(MetricsRow(epoch, split, loss, gnorm, wall_ms, epoch))
        stalled = stalled + 1 if opt.max_abs_u < STALL_U else 0
        if cfg.early_stop and stalled >= STALL_STEPS:
            table.meta["stopped_early"] = epoch
            break
    table.meta["x"] = params["x"]
    table.meta["inverted_resets"] = opt.inverted_resets
    return table


def run_experiment(cfg: ExperimentConfig) -> MetricsTable:
    """Train per ``cfg`` and return one train and one validation row per epoch."""
    if cfg.experiment == "alpha-sweep":
        raise ConfigError("experiment 'alpha-sweep' runs through alpha_sweep (CLI: sweep)")
    if cfg.experiment in SURFACES:
        table = _run_surface(cfg)
    else:
        table = _run_data(cfg)
    table.validate()
    return table


def alpha_sweep(cfg: ExperimentConfig, alphas) -> dict[float, MetricsTable]:
    """One BSG run per interval factor, all sharing seed, init and data order.

    ``experiment='alpha-sweep'`` sweeps the MNIST logistic regression task.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ConfigError("alpha sweep needs at least one alpha")
    if cfg.optimizer != "bsg":
        raise ConfigError("alpha sweep requires optimizer 'bsg'")
    base = cfg if cfg.experiment != "alpha-sweep" else replace(cfg, experiment="logreg-mnist")
    return {a: run_experiment(replace(base, alpha=a)) for a in alphas}


# -- metrics files ---------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _rounded(row: MetricsRow) -> dict:
    return {
        "epoch": row.epoch,
        "split": row.split,
        "loss": float(_fmt(row.loss)),
        "accuracy": float(_fmt(row.accuracy)),
        "wall_ms": float(_fmt(row.wall_ms)),
        "steps": row.steps,
    }


def metrics_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for r in table.rows:
        writer.writerow([r.epoch, r.split, _fmt(r.loss), _fmt(r.accuracy), _fmt(r.wall_ms), r.steps])
    return buf.getvalue()


def write_metrics(table: MetricsTable, path, format: str = "csv") -> None:
    if format == "csv":
        text = metrics_csv(table)
    elif format == "json":
        text = json.dumps([_rounded(r) for r in table.rows], indent=2) + "\n"
    else:
        raise ConfigError(f"unknown metrics format {format!r}")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise DataFileError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics(path) -> MetricsTable:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".json":
        records = json.loads(text)
    else:
        records = list(csv.DictReader(io.StringIO(text)))
    rows = [
        MetricsRow(int(r["epoch"]), r["split"], float(r["loss"]), float(r["accuracy"]),
                   float(r["wall_ms"]), int(r["steps"]))
        for r in records
    ]
    return MetricsTable(rows)

"""Models with hand-derived gradients, plus a finite-difference checker.

Parameters are dicts of float64 arrays; every ``*_eval`` function returns
``(loss, grads)`` with ``grads`` keyed like the parameters. Losses are batch
means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, LabelRangeError, NonFiniteError, ShapeMismatchError
from .tensor import RngState, rng_bernoulli, rng_permutation, rng_uniform

INIT_SCALE = 0.05


@dataclass
class Batch:
    X: np.ndarray | sp.csr_matrix
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.ndim != 1 or self.y.size < 1:
            raise ShapeMismatchError("labels must be a non-empty vector")
        if self.X.shape[0] != self.y.size:
            raise ShapeMismatchError(f"{self.X.shape[0]} rows but {self.y.size} labels")

    @property
    def size(self) -> int:
        return self.y.size


def _check_labels(y, n_classes):
    if y.min() < 0 or y.max() >= n_classes:
        raise LabelRangeError(f"labels must lie in [0, {n_classes})")


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite {what}")
    return a


def _softmax_residual(logits, y):
    """Mean cross-entropy and d(loss)/d(logits) for integer labels."""
    _finite(logits, "logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(y.size)
    loss = float(np.mean(log_norm - shifted[rows, y]))
    resid = np.exp(shifted - log_norm[:, None])
    resid[rows, y] -= 1.0
    return loss, resid / y.size


# -- softmax logistic regression ---------------------------------------------


def softmax_logits(params, X):
    return np.asarray(X @ params["W"]) + params["b"]


def softmax_xent(params, batch: Batch):
    W = params["W"]
    _check_labels(batch.y, W.shape[1])
    loss, resid = _softmax_residual(softmax_logits(params, batch.X), batch.y)
    grads = {"W": np.asarray(batch.X.T @ resid), "b": resid.sum(axis=0)}
    return loss, grads


def init_softmax(d, n_classes, rng: RngState):
    return {"W": rng_uniform(rng, (d, n_classes), -INIT_SCALE, INIT_SCALE), "b": np.zeros(n_classes)}


# -- sigmoid logistic regression with input dropout --------------------------


def _drop_inputs(X, dropout_p, rng):
    """Inverted dropout on the inputs: kept entries are scaled by 1/keep."""
    keep = 1.0 - dropout_p
    if sp.issparse(X):
        X = X.tocsr(copy=True)
        X.data = X.data * rng_bernoulli(rng, X.data.shape, keep) / keep
        return X
    return X * rng_bernoulli(rng, X.shape, keep) / keep


def sigmoid_logit(params, X):
    return np.asarray(X @ params["w"]).reshape(-1) + params["b"][0]


def sigmoid_bce(params, batch: Batch, dropout_p: float = 0.0, rng: RngState | None = None, train: bool = True):
    """Binary cross-entropy of ``sigmoid(X w + b)``.

    With ``train`` and ``dropout_p > 0`` the inputs are masked using a copy of
    ``rng`` (the caller's state is left untouched, so repeated evaluation
    with the same state sees the same mask).
    """
    if not 0.0 <= dropout_p < 1.0:
        raise ConfigError(f"dropout_p must be in [0, 1), got {dropout_p}")
    _check_labels(batch.y, 2)
    X = batch.X
    if train and dropout_p > 0.0:
        if rng is None:
            raise ConfigError("dropout needs an rng")
        X = _drop_inputs(X, dropout_p, RngState(rng.seed, rng.counter))
    z = _finite(sigmoid_logit(params, X), "logits")
    y = batch.y.astype(np.float64)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    resid = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / y.size
    grads = {"w": np.asarray(X.T @ resid).reshape(-1), "b": np.array([resid.sum()])}
    return loss, grads


def init_sigmoid(d, rng: RngState):
    return {"w": rng_uniform(rng, (d,), -INIT_SCALE, INIT_SCALE), "b": np.zeros(1)}


# -- two-hidden-layer ReLU network -------------------------------------------


def _mlp_forward(params, X):
    a1 = np.asarray(X @ params["W1"]) + params["b1"]
    h1 = np.where(a1 > 0, a1, 0.0)
    a2 = h1 @ params["W2"] + params["b2"]
    h2 = np.where(a2 > 0, a2, 0.0)
    logits = h2 @ params["W3"] + params["b3"]
    return a1, h1, a2, h2, logits


def mlp_logits(params, X):
    return _mlp_forward(params, X)[-1]


def mlp_pattern(params, batch: Batch):
    """ReLU on/off pattern; a coordinate whose perturbation changes it sits on a kink."""
    a1, _, a2, _, _ = _mlp_forward(params, batch.X)
    return a1 > 0, a2 > 0


def mlp_eval(params, batch: Batch):
    _check_labels(batch.y, params["W3"].shape[1])
    X = batch.X
    a1, h1, a2, h2, logits = _mlp_forward(params, X)
    _finite(a1, "activations")
    _finite(a2, "activations")
    loss, d_logits = _softmax_residual(logits, batch.y)
    grads = {"W3": h2.T @ d_logits, "b3": d_logits.sum(axis=0)}
    d_a2 = (d_logits @ params["W3"].T) * (a2 > 0)
    grads["W2"] = h1.T @ d_a2
    grads["b2"] = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ params["W2"].T) * (a1 > 0)
    grads["W1"] = np.asarray(X.T @ d_a1)
    grads["b1"] = d_a1.sum(axis=0)
    return loss, grads


def init_mlp(d, n_classes, rng: RngState, hidden=(500, 300)):
    sizes = (d, *hidden, n_classes)
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        params[f"W{k}"] = rng_uniform(rng, (fan_in, fan_out), -INIT_SCALE, INIT_SCALE)
        params[f"b{k}"] = np.zeros(fan_out)
    return params


# -- model wrapper -------------------------------------------------------------


@dataclass
class Model:
    """Loss/gradient evaluator plus the pieces the trainer and checker need.

    ``eval(params, batch, rng)`` trains-mode loss and grads (``rng`` drives
    dropout, ignored otherwise); ``loss(params, batch)`` is eval-mode loss;
    ``logits(params, X)`` feeds :func:`accuracy`.
    """

    name: str
    eval: Callable
    loss: Callable
    logits: Callable
    pattern: Callable | None = None


def softmax_model() -> Model:
    return Model(
        "softmax",
        eval=lambda params, batch, rng=None: softmax_xent(params, batch),
        loss=lambda params, batch: softmax_xent(params, batch)[0],
        logits=softmax_logits,
    )


def sigmoid_model(dropout_p: float = 0.0) -> Model:
    if not 0.0 <= dropout_p < 1.0:
        raise ConfigError(f"dropout_p must be in [0, 1), got {dropout_p}")

    def logits(params, X):
        z = sigmoid_logit(params, X)
        return np.column_stack([np.zeros_like(z), z])

    return Model(
        "sigmoid",
        eval=lambda params, batch, rng=None: sigmoid_bce(params, batch, dropout_p, rng),
        loss=lambda params, batch: sigmoid_bce(params, batch, train=False)[0],
        logits=logits,
    )


def mlp_model() -> Model:
    return Model(
        "mlp",
        eval=lambda params, batch, rng=None: mlp_eval(params, batch),
        loss=lambda params, batch: mlp_eval(params, batch)[0],
        logits=mlp_logits,
        pattern=mlp_pattern,
    )


def accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax equals the label (ties go to the lowest index)."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatchError(f"logits {logits.shape} do not match {labels.shape[0]} labels")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


# -- finite differences --------------------------------------------------------


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(model: Model, params, batch: Batch, eps: float = 1e-6, coords=None,
                      max_coords: int | None = None, rng: RngState | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``coords`` optionally maps parameter name to flat indices to test;
    otherwise every coordinate is tested, or ``max_coords`` per parameter
    sampled with ``rng``. Coordinates whose +/-eps perturbation flips a ReLU
    are skipped (the loss has a kink there).
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ConfigError(f"eps must be in [1e-7, 1e-4], got {eps}")
    # Dropout masks come from the rng; pin one state so every evaluation sees the same mask.
    frozen = RngState(rng.seed, rng.counter) if rng is not None else None
    _, analytic = model.eval(params, batch, frozen)
    base_pattern = model.pattern(params, batch) if model.pattern else None

    def loss_at(name, flat_idx, delta):
        shifted = dict(params)
        arr = params[name].copy()
        arr.flat[flat_idx] += delta
        shifted[name] = arr
        loss, _ = model.eval(shifted, batch, frozen)
        pattern = model.pattern(shifted, batch) if model.pattern else None
        return loss, pattern

    worst = 0.0
    for name, value in params.items():
        if coords is not None:
            indices = np.asarray(coords.get(name, ()), dtype=np.int64)
        elif max_coords is not None and value.size > max_coords:
            indices = rng_permutation(rng or RngState(0), value.size)[:max_coords]
        else:
            indices = np.arange(value.size)
        for i in indices:
            up, pat_up = loss_at(name, i, eps)
            down, pat_down = loss_at(name, i, -eps)
            if base_pattern is not None and not (
                _same_pattern(pat_up, base_pattern) and _same_pattern(pat_down, base_pattern)
            ):
                continue
            numeric = (up - down) / (2 * eps)
            exact = float(analytic[name].flat[i])
            err = abs(exact - numeric) / max(1e-12, abs(exact) + abs(numeric))
            worst = max(worst, err)
    return worst

"""First-order inner optimizers.

Each optimizer *returns* the update value ``u`` (so that ``w_next = w - u``)
instead of applying it. BSG consumes ``u`` to size its search intervals;
standalone baselines simply subtract it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import check_finite, check_same_shape

KINDS = ("adam", "sgd", "momentum", "rmsprop")


@dataclass(frozen=True)
class InnerHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    kind: str = "adam"
    momentum_coef: float = 0.9
    decay: float = 0.9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown inner optimizer kind {self.kind!r}; expected one of {KINDS}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        for name in ("beta1", "beta2", "momentum_coef", "decay"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {value}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass
class BaselineState:
    """Accumulator for the non-Adam kinds: velocity (momentum) or mean square (rmsprop)."""

    kind: str
    acc: np.ndarray
    t: int = 0


def init_inner_state(shape, h: InnerHyper) -> AdamState | BaselineState:
    if h.kind == "adam":
        return AdamState(m=np.zeros(shape), v=np.zeros(shape))
    return BaselineState(kind=h.kind, acc=np.zeros(shape))


def _check_grad(g, ref):
    check_same_shape(g, ref, names=("gradient", "optimizer state"))
    check_finite(g, "gradient")


def adam_update(state: AdamState, g: np.ndarray, h: InnerHyper) -> np.ndarray:
    """Advance Adam's moments with ``g`` and return the bias-corrected step ``u``."""
    _check_grad(g, state.m)
    state.t += 1
    state.m = h.beta1 * state.m + (1.0 - h.beta1) * g
    state.v = h.beta2 * state.v + (1.0 - h.beta2) * (g * g)
    m_hat = state.m / (1.0 - h.beta1**state.t)
    v_hat = state.v / (1.0 - h.beta2**state.t)
    return h.lr * m_hat / (np.sqrt(v_hat) + h.eps)


def baseline_update(state: BaselineState, g: np.ndarray, h: InnerHyper) -> np.ndarray:
    if state.kind != h.kind:
        raise ConfigError(f"state was built for {state.kind!r} but hyperparameters say {h.kind!r}")
    if h.kind == "sgd":
        _check_grad(g, state.acc)
        state.t += 1
        return h.lr * g
    if h.kind == "momentum":
        _check_grad(g, state.acc)
        state.t += 1
        state.acc = h.momentum_coef * state.acc + g
        return h.lr * state.acc
    if h.kind == "rmsprop":
        _check_grad(g, state.acc)
        state.t += 1
        state.acc = h.decay * state.acc + (1.0 - h.decay) * (g * g)
        return h.lr * g / (np.sqrt(state.acc) + h.eps)
    raise ConfigError(f"baseline_update does not handle kind {h.kind!r}")


def inner_update(state, g: np.ndarray, h: InnerHyper) -> np.ndarray:
    if isinstance(state, AdamState):
        return adam_update(state, g, h)
    return baseline_update(state, g, h)

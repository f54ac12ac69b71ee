"""Binary Search Gradient (BSG / BiGrad) update rule.

Every parameter element carries its own search interval ``[n, p]``: ``n`` is
a point assumed to have negative loss derivative and ``p`` one assumed to
have positive derivative. Each step moves one endpoint to ``x - u`` (``u``
from the inner optimizer, chosen by the sign of the gradient), rebuilds the
interval around it when the interval is invalid or has collapsed, and then
jumps to the midpoint.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BracketError, ConfigError, NonFiniteError
from .inner import AdamState, BaselineState, InnerHyper, init_inner_state, inner_update
from .tensor import _validate_shape, check_finite, check_same_shape

TRANSCRIPT_COLUMNS = ("step", "elem", "x", "g", "u", "n", "p", "r")


@dataclass(frozen=True)
class BsgConfig:
    alpha: float = 2.0
    n0: float = 100.0
    p0: float = 0.0
    abs_reset: bool = False

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"interval factor alpha must be a finite value > 0, got {self.alpha}")
        if not (math.isfinite(self.n0) and math.isfinite(self.p0)):
            raise ConfigError("initial boundaries must be finite")


@dataclass
class SearchInterval:
    lo: float
    hi: float

    @property
    def valid(self) -> bool:
        return self.lo < self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass
class BsgState:
    n: np.ndarray
    p: np.ndarray
    inner: AdamState | BaselineState
    alpha: float
    abs_reset: bool = False
    t: int = 0
    # Resets that left n >= p (possible with signed u); kept for diagnostics only.
    inverted_resets: int = 0
    last_u: np.ndarray | None = field(default=None, repr=False)
    last_r: np.ndarray | None = field(default=None, repr=False)

    def interval(self, index) -> SearchInterval:
        return SearchInterval(float(self.n[index]), float(self.p[index]))


def bsg_init(shape, cfg: BsgConfig, h: InnerHyper | None = None) -> BsgState:
    shape = _validate_shape(shape)
    h = h or InnerHyper()
    return BsgState(
        n=np.full(shape, cfg.n0),
        p=np.full(shape, cfg.p0),
        inner=init_inner_state(shape, h),
        alpha=cfg.alpha,
        abs_reset=cfg.abs_reset,
    )


def reset_flag(n: float, p: float, u: float) -> int:
    """1 when the interval ``[n, p]`` widened by ``|u|`` is empty or inverted."""
    if not (math.isfinite(n) and math.isfinite(p) and math.isfinite(u)):
        raise NonFiniteError(f"reset_flag needs finite inputs, got n={n}, p={p}, u={u}")
    return 1 if n - p + abs(u) > 0 else 0


def bsg_step(x: np.ndarray, g: np.ndarray, state: BsgState, h: InnerHyper) -> np.ndarray:
    """One BSG step for every element of ``x``; returns the new parameter values.

    ``state`` is advanced in place (boundaries, inner optimizer, counters) and
    keeps the ``u`` and reset mask of this step in ``last_u``/``last_r``.
    """
    check_same_shape(x, g, state.n, names=("parameter", "gradient", "state"))
    check_finite(g, "gradient")
    check_finite(x, "parameter")

    u = inner_update(state.inner, g, h)
    n, p, alpha = state.n, state.p, state.alpha
    reset = (n - p + np.abs(u)) > 0
    neg = g <= 0  # g == 0 goes with the negative side

    moved = x - u
    if state.abs_reset:
        rebuilt = np.where(neg, moved + alpha * np.abs(u), moved - alpha * np.abs(u))
    else:
        rebuilt = moved - alpha * u
    n_new = np.where(neg, moved, np.where(reset, rebuilt, n))
    p_new = np.where(neg, np.where(reset, rebuilt, p), moved)
    x_next = (n_new + p_new) / 2

    if not np.all(np.isfinite(x_next)):
        raise NonFiniteError("BSG step produced a non-finite parameter")
    state.inverted_resets += int(np.count_nonzero(reset & (n_new >= p_new)))
    state.n, state.p = n_new, p_new
    state.t += 1
    state.last_u, state.last_r = u, reset.astype(np.int8)
    return x_next


def bisect_minimize(
    dfn: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-8,
    max_iter: int = 200,
    full_output: bool = False,
):
    """Minimize a strictly convex 1-D function by bisecting on the sign of its derivative.

    Requires ``dfn(lo) < 0 < dfn(hi)``. Stops when the bracket is no wider
    than ``tol`` (or the derivative is exactly zero at a midpoint), which takes
    at most ``ceil(log2((hi - lo) / tol))`` halvings. With ``full_output`` the
    number of halvings is returned alongside the minimizer.
    """
    if not lo < hi:
        raise BracketError(f"need lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise ConfigError(f"tol must be > 0, got {tol}")
    d_lo, d_hi = dfn(lo), dfn(hi)
    if not (d_lo < 0 and d_hi > 0):
        raise BracketError(
            f"derivative must be negative at lo and positive at hi; got f'({lo})={d_lo}, f'({hi})={d_hi}"
        )
    iters = 0
    while hi - lo > tol and iters < max_iter:
        mid = (lo + hi) / 2
        d = dfn(mid)
        if not math.isfinite(d):
            raise NonFiniteError(f"derivative is not finite at {mid}")
        iters += 1
        if d == 0:
            lo = hi = mid
            break
        if d < 0:
            lo = mid
        else:
            hi = mid
    w = (lo + hi) / 2
    return (w, iters) if full_output else w


@dataclass(frozen=True)
class TraceRecord:
    step: int
    elem: int
    x: float
    g: float
    u: float
    n: float
    p: float
    r: int
    x_next: float


def bsg_transcript(
    grad: Callable[[np.ndarray], np.ndarray],
    x0,
    steps: int,
    cfg: BsgConfig | None = None,
    h: InnerHyper | None = None,
) -> list[TraceRecord]:
    """Run ``steps`` BSG steps from ``x0`` and record every element at every step.

    ``x`` in a record is the point the gradient was taken at; ``n``, ``p`` and
    ``x_next`` are the values after the step.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    cfg = cfg or BsgConfig()
    h = h or InnerHyper()
    x = np.array(x0, dtype=np.float64).reshape(-1)
    state = bsg_init(x.shape, cfg, h)
    records = []
    for step in range(1, steps + 1):
        g = np.asarray(grad(x), dtype=np.float64).reshape(x.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient is not finite at step {step}")
        x_next = bsg_step(x, g, state, h)
        for i in range(x.size):
            records.append(
                TraceRecord(
                    step, i, float(x[i]), float(g[i]), float(state.last_u[i]),
                    float(state.n[i]), float(state.p[i]), int(state.last_r[i]), float(x_next[i]),
                )
            )
        x = x_next
    return records


def scalar_trace(
    dfn: Callable[[float], float],
    x0: float,
    steps: int,
    cfg: BsgConfig | None = None,
    h: InnerHyper | None = None,
) -> list[TraceRecord]:
    """Transcript of BSG on a one-parameter problem with derivative ``dfn``."""
    return bsg_transcript(lambda x: np.array([dfn(float(x[0]))]), [x0], steps, cfg, h)


def write_transcript(records, path) -> None:
    """CSV with one row per (step, element): step,elem,x,g,u,n,p,r."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRANSCRIPT_COLUMNS)
        for rec in records:
            writer.writerow([rec.step, rec.elem, repr(rec.x), repr(rec.g), repr(rec.u), repr(rec.n), repr(rec.p), rec.r])


def read_transcript(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {k: (int(v) if k in ("step", "elem", "r") else float(v)) for k, v in row.items()}
            )
    return rows

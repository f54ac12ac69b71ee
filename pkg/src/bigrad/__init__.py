"""Binary Search Gradient (BSG / BiGrad) optimization with numpy."""

from .bench import ExperimentConfig, MetricsTable, alpha_sweep, read_metrics, run_experiment, write_metrics
from .bsg import (
    BsgConfig,
    BsgState,
    SearchInterval,
    bisect_minimize,
    bsg_init,
    bsg_step,
    bsg_transcript,
    reset_flag,
    scalar_trace,
    write_transcript,
)
from .errors import BigradError
from .inner import AdamState, BaselineState, InnerHyper, adam_update, baseline_update
from .tensor import RngState, rng_uniform, tensor_new

__all__ = [
    "AdamState", "BaselineState", "BigradError", "BsgConfig", "BsgState", "ExperimentConfig",
    "InnerHyper", "MetricsTable", "RngState", "SearchInterval", "adam_update", "alpha_sweep",
    "baseline_update", "bisect_minimize", "bsg_init", "bsg_step", "bsg_transcript", "read_metrics",
    "reset_flag", "rng_uniform", "run_experiment", "scalar_trace", "tensor_new", "write_metrics",
    "write_transcript",
]

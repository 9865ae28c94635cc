"""Training loop, evaluation, reporting, and the command-line interface."""

from .optim import AdamHyper, AdamState, adam_step
from .evaluate import EvalReport, evaluate, report_table
from .checkpoint import load_checkpoint, save_checkpoint, checkpoint_bytes
from .train import TrainConfig, TrainResult, train
from .gradsuite import run_suite

__all__ = [
    "AdamHyper", "AdamState", "adam_step",
    "EvalReport", "evaluate", "report_table",
    "load_checkpoint", "save_checkpoint", "checkpoint_bytes",
    "TrainConfig", "TrainResult", "train",
    "run_suite",
]

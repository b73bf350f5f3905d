"""Trainer, tester and the evaluation protocol."""

from .evaluation import (
    EvalReport,
    Protocol,
    confidence_halfwidth,
    cross_domain_evaluate,
    evaluate,
    read_report,
    task_accuracies,
    task_accuracy,
    validation_accuracy,
    write_report,
)
from .tester import load_method, load_run_config, run_test
from .trainer import (
    CKPT_ABORT,
    CKPT_BEST,
    CKPT_LAST,
    CONFIG_FILE,
    LOG_FILE,
    Trainer,
    TrainState,
    grid_search,
    read_train_log,
    train,
)

__all__ = [
    "CKPT_ABORT",
    "CKPT_BEST",
    "CKPT_LAST",
    "CONFIG_FILE",
    "EvalReport",
    "LOG_FILE",
    "Protocol",
    "TrainState",
    "Trainer",
    "confidence_halfwidth",
    "cross_domain_evaluate",
    "evaluate",
    "grid_search",
    "load_method",
    "load_run_config",
    "read_report",
    "read_train_log",
    "run_test",
    "task_accuracies",
    "task_accuracy",
    "train",
    "validation_accuracy",
    "write_report",
]

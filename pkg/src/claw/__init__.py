"""Continual learning with per-neuron adaptive variational weights, plus baselines."""

from .adaptive import AdaptiveVariationalLayer, PosteriorSnapshot
from .config import ExperimentConfig, parse_config
from .data import (LabeledDataset, Task, TaskSequence, load_idx_dir, permuted_tasks, split_tasks,
                   synthetic_tasks)
from .metrics import ResultsGrid, avg_accuracy, avg_accuracy_curve, paired_ttest, retention_curve
from .models import ClawModel, DeterministicModel, MeanFieldModel
from .runner import emit_csv, run_experiment
from .trainers import METHODS, TrainConfig, make_trainer

__all__ = [
    "AdaptiveVariationalLayer", "ClawModel", "DeterministicModel", "ExperimentConfig",
    "LabeledDataset", "METHODS", "MeanFieldModel", "PosteriorSnapshot", "ResultsGrid", "Task",
    "TaskSequence", "TrainConfig", "avg_accuracy", "avg_accuracy_curve", "emit_csv", "load_idx_dir",
    "make_trainer", "paired_ttest", "parse_config", "permuted_tasks", "retention_curve",
    "run_experiment", "split_tasks", "synthetic_tasks",
]
__version__ = "0.1.0"

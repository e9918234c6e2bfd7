"""Accuracy grids, retention and forward-transfer curves, paired t-tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import ContractError


@dataclass
class ResultsGrid:
    """``acc[t][k]``: accuracy on task k after training task t (0-based, k <= t)."""

    n_tasks: int
    acc: list[list[float | None]] = field(default_factory=list)

    def __post_init__(self):
        if not self.acc:
            self.acc = [[None] * (t + 1) for t in range(self.n_tasks)]

    def set(self, t: int, k: int, value: float) -> None:
        if k > t:
            raise ContractError(f"grid is lower-triangular: k={k} > t={t}")
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"accuracy {value} outside [0, 1]")
        self.acc[t][k] = float(value)

    def row(self, t: int) -> list[float]:
        row = self.acc[t]
        if any(v is None for v in row):
            raise ContractError(f"row {t} of the results grid is incomplete")
        return list(row)  # type: ignore[arg-type]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "ResultsGrid":
        grid = cls(len(rows))
        for t, row in enumerate(rows):
            for k, v in enumerate(row):
                grid.set(t, k, v)
        return grid


def avg_accuracy(grid: ResultsGrid, t: int) -> float:
    """Mean accuracy over tasks 0..t after training task t."""
    return float(np.mean(grid.row(t)))


def avg_accuracy_curve(grid: ResultsGrid) -> list[float]:
    return [avg_accuracy(grid, t) for t in range(grid.n_tasks)]


def retention_curve(grid: ResultsGrid) -> list[float]:
    out = []
    for t in range(grid.n_tasks):
        v = grid.acc[t][0]
        if v is None:
            raise ContractError(f"first-task accuracy missing after task {t}")
        out.append(v)
    return out


def forward_transfer_curve(sequence, trainer_factory: Callable, cfg=None) -> list[float]:
    """Accuracy on the last task after learning the final k tasks, k = 1..T.

    ``trainer_factory(cfg)`` must return a fresh trainer exposing
    ``observe_task(task_id, dataset)`` and ``evaluate(dataset, task_id)``.
    """
    T = len(sequence)
    curve = []
    for k in range(1, T + 1):
        trainer = trainer_factory(cfg)
        for t in range(T - k, T):
            trainer.observe_task(t, sequence[t].train)
        curve.append(trainer.evaluate(sequence[T - 1].test, T - 1))
    return curve


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    p_value: float
    significant: bool


def paired_ttest(a: Sequence[float], b: Sequence[float], p_threshold: float = 0.05) -> TTestResult:
    """Two-tailed paired t-test of ``a`` against ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ContractError("paired_ttest needs two equal-length samples of size >= 2")
    d = a - b
    n = len(d)
    mean = d.mean()
    sd = d.std(ddof=1)
    # differences equal up to rounding count as zero spread
    if sd <= 1e-12 * max(abs(mean), np.finfo(float).tiny):
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t_stat = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t_stat), df=n - 1)
    return TTestResult(float(t_stat), float(p), bool(p < p_threshold))

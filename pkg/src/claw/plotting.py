"""Static PNG figures of the metric curves, one line per method."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def seed_summary(rows: Iterable[dict], col: str, x: str = "task_index"):
    """Per method: sorted x values with the across-seed mean and std of ``col``."""
    acc: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[str(r["method"])][int(r[x])].append(float(r[col]))
    out = {}
    for method, by_x in acc.items():
        xs = sorted(by_x)
        vals = [np.asarray(by_x[i]) for i in xs]
        out[method] = (np.array(xs), np.array([v.mean() for v in vals]),
                       np.array([v.std() for v in vals]))
    return out


def plot_curve_file(rows, col: str, path: str | Path, ylabel: str, x: str = "task_index") -> Path:
    rows = list(rows)
    fig = Figure(figsize=(5.0, 3.6))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    for method, (xs, mean, std) in seed_summary(rows, col, x).items():
        ax.errorbar(xs, mean, yerr=std, marker="o", ms=4, capsize=3, label=method)
    ax.set_xlabel("tasks learnt" if x == "tasks_learnt" else "task")
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.02)
    if rows:
        ax.set_xticks(sorted({int(r[x]) for r in rows}))
        ax.legend(frameon=False, fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return Path(path)

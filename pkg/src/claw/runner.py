"""Seeded experiment runs and their CSV outputs."""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import itertools
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .data import (FASHION_NAMES, FASHION_PAIRS, MNIST_PAIRS, TaskSequence, load_idx_dir,
                   permuted_tasks, split_tasks, synthetic_tasks)
from .errors import ContractError
from .metrics import (ResultsGrid, avg_accuracy_curve, forward_transfer_curve, paired_ttest,
                      retention_curve)
from .trainers import make_trainer

DONE_MARKER = "_DONE"
SYNTHETIC_DIM = 32
SYNTHETIC_PER_TASK = 1000

RESULT_FIELDS = ("run_id", "method", "seed", "task_index", "eval_task", "accuracy")
TIMING_FIELDS = ("run_id", "method", "seed", "task_index", "wall_ms")
AVG_FIELDS = ("method", "seed", "task_index", "avg_accuracy")
RETENTION_FIELDS = ("method", "seed", "task_index", "retention")
TRANSFER_FIELDS = ("method", "seed", "tasks_learnt", "accuracy")
SIGNIFICANCE_FIELDS = ("method_a", "method_b", "metric", "n", "t_stat", "p_value", "significant")


@dataclass(frozen=True)
class RunRecord:
    """One populated grid cell. Task indices are 1-based."""

    run_id: str
    method: str
    seed: int
    task_index: int
    eval_task: int
    accuracy: float
    wall_ms: float


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    return str(v)


def _rows(records: Iterable, fieldnames: Sequence[str] | None):
    records = list(records)
    if fieldnames is None:
        if not records:
            raise ContractError("fieldnames are required for an empty record list")
        first = records[0]
        fieldnames = ([f.name for f in dataclasses.fields(first)]
                      if dataclasses.is_dataclass(first) else list(first))
    out = []
    for r in records:
        d = dataclasses.asdict(r) if dataclasses.is_dataclass(r) else r
        if set(fieldnames) - set(d):
            raise ContractError(f"record lacks fields {sorted(set(fieldnames) - set(d))}")
        out.append([_fmt(d[k]) for k in fieldnames])
    return list(fieldnames), out


def emit_csv(records: Iterable, path, fieldnames: Sequence[str] | None = None) -> None:
    """Write records (dataclasses or dicts) as UTF-8 CSV with LF endings.

    Reals are printed with 6 significant digits. ``path`` may be ``"-"``
    for stdout.
    """
    header, rows = _rows(records, fieldnames)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def read_csv(path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- sequences ------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _base(data_dir: str, fashion: bool):
    return load_idx_dir(data_dir, FASHION_NAMES if fashion else None)


def synthetic_margins(n_tasks: int) -> list[float]:
    """Decreasing separations, from 2 down to 1, so later tasks are harder."""
    return np.linspace(2.0, 1.0, n_tasks).tolist()


def build_sequence(cfg: ExperimentConfig, seed: int) -> TaskSequence:
    if cfg.benchmark == "split-synthetic":
        return synthetic_tasks(cfg.n_tasks, SYNTHETIC_DIM, SYNTHETIC_PER_TASK,
                               synthetic_margins(cfg.n_tasks), seed, head_mode=cfg.head_mode)
    if cfg.benchmark == "permuted-mnist":
        return permuted_tasks(_base(cfg.data_dir, False), cfg.n_tasks, seed,
                              cfg.subset_per_task, cfg.subset_test)
    fashion = cfg.benchmark == "split-fashion"
    pairs = (FASHION_PAIRS if fashion else MNIST_PAIRS)[:cfg.n_tasks]
    return split_tasks(_base(cfg.data_dir, fashion), pairs, seed, cfg.subset_per_task,
                       cfg.subset_test, name=cfg.benchmark)


# --- runs -----------------------------------------------------------------

def method_label(cfg: ExperimentConfig, method: str) -> str:
    return method if cfg.ablation == "none" else f"{method}-{cfg.ablation}"


@dataclass
class SeedRun:
    method: str
    seed: int
    grid: ResultsGrid
    wall_ms: list[float]
    transfer: list[float] | None = None

    @property
    def run_id(self) -> str:
        return f"{self.method}-seed{self.seed}"

    def records(self) -> list[RunRecord]:
        return [RunRecord(self.run_id, self.method, self.seed, t + 1, k + 1, self.grid.acc[t][k],
                          self.wall_ms[t])
                for t in range(self.grid.n_tasks) for k in range(t + 1)]


def _trainer(cfg: ExperimentConfig, method: str, seed: int, seq: TaskSequence):
    return make_trainer(method, cfg.train_config(seed), seq.dim, seq.n_classes,
                        list(cfg.architecture), cfg.head_mode)


def run_seed(cfg: ExperimentConfig, method: str, seed: int) -> SeedRun:
    """Train one method over the task stream for one seed and fill its grid."""
    seq = build_sequence(cfg, seed)
    trainer = _trainer(cfg, method, seed, seq)
    grid = ResultsGrid(len(seq))
    wall = []
    for t in range(len(seq)):
        t0 = time.perf_counter()
        trainer.observe_task(t, seq[t].train)
        wall.append((time.perf_counter() - t0) * 1e3)
        for k in range(t + 1):
            grid.set(t, k, trainer.evaluate(seq[k].test, k))
    transfer = None
    if cfg.forward_transfer:
        transfer = forward_transfer_curve(seq, lambda _c: _trainer(cfg, method, seed, seq))
    return SeedRun(method_label(cfg, method), seed, grid, wall, transfer)


def _job(args) -> SeedRun:
    return run_seed(*args)


def run_all(cfg: ExperimentConfig) -> list[SeedRun]:
    jobs = [(cfg, m, s) for m, s in itertools.product(cfg.method, cfg.seeds)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


# --- outputs --------------------------------------------------------------

def curve_rows(runs: Sequence[SeedRun], kind: str) -> list[dict]:
    fn, col = {"avg": (avg_accuracy_curve, "avg_accuracy"),
               "retention": (retention_curve, "retention")}[kind]
    return [{"method": r.method, "seed": r.seed, "task_index": t + 1, col: v}
            for r in runs for t, v in enumerate(fn(r.grid))]


def ttest_rows(final: dict[str, dict[int, float]]) -> list[dict]:
    """Paired t-tests between every pair of methods; ``final[method][seed]`` is the metric."""
    rows = []
    for a, b in itertools.combinations(final, 2):
        seeds = sorted(set(final[a]) & set(final[b]))
        if len(seeds) < 2:
            continue
        res = paired_ttest([final[a][s] for s in seeds], [final[b][s] for s in seeds])
        rows.append({"method_a": a, "method_b": b, "metric": "avg_accuracy_final", "n": len(seeds),
                     "t_stat": res.t_stat, "p_value": res.p_value, "significant": res.significant})
    return rows


def final_avg(grids: dict[tuple[str, int], ResultsGrid]) -> dict[str, dict[int, float]]:
    final: dict[str, dict[int, float]] = {}
    for (m, s), g in grids.items():
        final.setdefault(m, {})[s] = avg_accuracy_curve(g)[-1]
    return final


def significance_rows(runs: Sequence[SeedRun]) -> list[dict]:
    return ttest_rows(final_avg({(r.method, r.seed): r.grid for r in runs}))


def write_outputs(runs: Sequence[SeedRun], out: Path, plots: bool = True) -> None:
    records = [rec for r in runs for rec in r.records()]
    emit_csv(records, out / "results.csv", RESULT_FIELDS)
    # wall-clock lives apart so results.csv stays byte-identical across reruns
    emit_csv(records, out / "timings.csv", TIMING_FIELDS)
    avg, ret = curve_rows(runs, "avg"), curve_rows(runs, "retention")
    emit_csv(avg, out / "avg_accuracy.csv", AVG_FIELDS)
    emit_csv(ret, out / "retention.csv", RETENTION_FIELDS)
    transfer = [{"method": r.method, "seed": r.seed, "tasks_learnt": k + 1, "accuracy": v}
                for r in runs if r.transfer is not None for k, v in enumerate(r.transfer)]
    if transfer:
        emit_csv(transfer, out / "forward_transfer.csv", TRANSFER_FIELDS)
    sig = significance_rows(runs)
    if sig:
        emit_csv(sig, out / "significance.csv", SIGNIFICANCE_FIELDS)
    if plots:
        from .plotting import plot_curve_file

        plot_curve_file(avg, "avg_accuracy", out / "avg_accuracy.png", "average accuracy")
        plot_curve_file(ret, "retention", out / "retention.png", "accuracy on task 1")
        if transfer:
            plot_curve_file(transfer, "accuracy", out / "forward_transfer.png",
                            "accuracy on the last task", x="tasks_learnt")


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (method, seed) pair and write the CSV tables into ``cfg.out_dir``.

    The ``_DONE`` marker is written last; its absence flags partial output.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / DONE_MARKER).unlink(missing_ok=True)
    runs = run_all(cfg)
    write_outputs(runs, out, cfg.plots)
    (out / DONE_MARKER).write_text("ok\n", encoding="utf-8")
    return out


def grids_from_results(rows: Iterable[dict[str, str]]) -> dict[tuple[str, int], ResultsGrid]:
    """Rebuild per-(method, seed) grids from parsed results.csv rows."""
    cells: dict[tuple[str, int], dict[tuple[int, int], float]] = {}
    for r in rows:
        key = (r["method"], int(r["seed"]))
        cells.setdefault(key, {})[(int(r["task_index"]) - 1, int(r["eval_task"]) - 1)] = float(r["accuracy"])
    grids = {}
    for key, c in cells.items():
        n = max(t for t, _ in c) + 1
        g = ResultsGrid(n)
        for (t, k), v in c.items():
            g.set(t, k, v)
        grids[key] = g
    return grids

"""Experiment configuration: YAML in, validated frozen dataclass out."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .adaptive import ABLATIONS
from .errors import ConfigError
from .models import HEAD_MODES
from .trainers import METHODS, TrainConfig

BENCHMARKS = ("permuted-mnist", "split-mnist", "split-fashion", "split-synthetic")
DATA_DIR_ENV = "CLAW_DATA_DIR"

# per-benchmark defaults for keys the user leaves out
BENCHMARK_DEFAULTS: dict[str, dict[str, Any]] = {
    "permuted-mnist": {"architecture": [100, 100], "head_mode": "single", "minibatch": 256,
                       "epochs": 10, "n_tasks": 10},
    "split-mnist": {"architecture": [256, 256], "head_mode": "multi", "minibatch": 128,
                    "epochs": 10, "n_tasks": 5},
    "split-fashion": {"architecture": [150, 150, 150, 150], "head_mode": "multi", "minibatch": 256,
                      "epochs": 10, "n_tasks": 5},
    # small batches and more epochs give the adaptation strengths enough
    # optimizer steps to open up on a 600-example task
    "split-synthetic": {"architecture": [100, 100], "head_mode": "single", "minibatch": 16,
                        "epochs": 30, "n_tasks": 5},
}

NEEDS_DATA = ("permuted-mnist", "split-mnist", "split-fashion")


@dataclass(frozen=True)
class ExperimentConfig:
    method: tuple[str, ...]
    benchmark: str
    architecture: tuple[int, ...]
    head_mode: str
    epochs: int
    minibatch: int
    n_tasks: int
    seeds: tuple[int, ...] = (0,)
    ewc_lambda: float = 100.0
    coreset_size: int = 200
    omega1: float = 0.05
    omega2: float = 0.02
    subset_per_task: int | None = None
    subset_test: int | None = None
    ablation: str = "none"
    data_dir: str | None = None
    out_dir: str = "results"
    forward_transfer: bool = False
    workers: int = 1
    plots: bool = True

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, minibatch=self.minibatch, omega1=self.omega1,
                           omega2=self.omega2, seed=seed, ablation=self.ablation,
                           ewc_lambda=self.ewc_lambda, coreset_size=self.coreset_size,
                           n_tasks=self.n_tasks)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["method"] = list(self.method) if len(self.method) > 1 else self.method[0]
        d["architecture"] = list(self.architecture)
        d["seeds"] = list(self.seeds)
        return d

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return validate(replace(self, **kw))


_KEYS = {f.name for f in fields(ExperimentConfig)}


def _int(key: str, v, minimum: int = 1) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _float(key: str, v, minimum: float = 0.0) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return float(v)


def _choice(key: str, v, allowed) -> str:
    if v not in allowed:
        raise ConfigError(key, f"{v!r} is not one of {', '.join(allowed)}")
    return v


def from_mapping(raw: dict[str, Any]) -> ExperimentConfig:
    """Fill benchmark defaults into ``raw`` and validate. Explicit values always win."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    for key in ("method", "benchmark"):
        if key not in raw:
            raise ConfigError(key, "required key missing")
    bench = _choice("benchmark", raw["benchmark"], BENCHMARKS)
    merged = dict(BENCHMARK_DEFAULTS[bench])
    merged.update(raw)

    method = merged["method"]
    methods = [method] if isinstance(method, str) else method
    if not isinstance(methods, list) or not methods:
        raise ConfigError("method", "expected a method name or a non-empty list of them")
    methods = [_choice("method", m, METHODS) for m in methods]
    if len(set(methods)) != len(methods):
        raise ConfigError("method", "duplicate methods")
    merged["method"] = tuple(methods)

    arch = merged["architecture"]
    if not isinstance(arch, list) or not arch:
        raise ConfigError("architecture", "expected a non-empty list of layer widths")
    merged["architecture"] = tuple(_int("architecture", w) for w in arch)

    seeds = merged.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a non-empty list of integers")
    merged["seeds"] = tuple(_int("seeds", s, 0) for s in seeds)
    if len(set(merged["seeds"])) != len(merged["seeds"]):
        raise ConfigError("seeds", "duplicate seeds")

    if merged.get("data_dir") is None and bench in NEEDS_DATA:
        merged["data_dir"] = os.environ.get(DATA_DIR_ENV)
    return validate(ExperimentConfig(**merged))


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _choice("head_mode", cfg.head_mode, HEAD_MODES)
    _choice("ablation", cfg.ablation, ABLATIONS)
    for key in ("epochs", "minibatch", "n_tasks", "coreset_size", "workers"):
        _int(key, getattr(cfg, key))
    for key in ("subset_per_task", "subset_test"):
        if getattr(cfg, key) is not None:
            _int(key, getattr(cfg, key))
    for key in ("ewc_lambda", "omega1", "omega2"):
        _float(key, getattr(cfg, key))
    for key in ("forward_transfer", "plots"):
        if not isinstance(getattr(cfg, key), bool):
            raise ConfigError(key, "expected true or false")
    if cfg.ablation != "none" and cfg.method != ("claw",):
        raise ConfigError("ablation", "ablations apply to the claw method only")
    if cfg.benchmark.startswith("split-") and cfg.benchmark != "split-synthetic" and cfg.n_tasks > 5:
        raise ConfigError("n_tasks", "split benchmarks have at most 5 label pairs")
    if cfg.benchmark in NEEDS_DATA:
        if not cfg.data_dir:
            raise ConfigError("data_dir", f"required for {cfg.benchmark}; set it or {DATA_DIR_ENV}")
        if not Path(cfg.data_dir).is_dir():
            raise ConfigError("data_dir", f"{cfg.data_dir} is not a directory")
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return from_mapping(raw if raw is not None else {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)

"""Labeled datasets, IDX ingestion and task-sequence builders."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_PAIRS = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
# T-shirt/Trouser, Pullover/Dress, Coat/Sandal, Shirt/Sneaker, Bag/Ankle boot
FASHION_PAIRS = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
FASHION_NAMES = ["T-shirt", "Trouser", "Pullover", "Dress", "Coat",
                 "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot"]

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_names: tuple[str, ...] | None = None
    # positions of the rows in the dataset they were drawn from
    source_index: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ContractError(f"inputs {x.shape} and labels {y.shape} disagree")
        if len(y) < 1:
            raise ContractError("dataset must hold at least one example")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ContractError(f"labels outside [0, {self.n_classes})")
        if not np.all(np.isfinite(x)):
            raise ContractError("inputs must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        src = idx if self.source_index is None else self.source_index[idx]
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.n_classes, self.class_names, src)


@dataclass(frozen=True)
class Task:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[Task, ...]
    head_mode: str
    name: str
    n_classes: int

    def __len__(self) -> int:
        return len(self.tasks)

    def __getitem__(self, i: int) -> Task:
        return self.tasks[i]

    @property
    def dim(self) -> int:
        return self.tasks[0].train.dim

    def tail(self, k: int) -> "TaskSequence":
        """The final ``k`` tasks, in order."""
        return TaskSequence(self.tasks[len(self.tasks) - k:], self.head_mode, self.name, self.n_classes)


# --- IDX ------------------------------------------------------------------

def _read_bytes(path: str | Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise FormatError(f"{what}: header truncated, need {need} bytes, have {len(raw)}", len(raw))
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise FormatError(f"{what}: bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    return struct.unpack(f">{ndim}I", raw[4:need])


def load_idx(images_path: str | Path, labels_path: str | Path,
             class_names: Sequence[str] | None = None) -> LabeledDataset:
    """Read an IDX image/label file pair (optionally gzipped), pixels scaled to [0, 1]."""
    img_raw = _read_bytes(images_path)
    n, rows, cols = _idx_header(img_raw, IDX_IMAGES_MAGIC, 3, "images")
    expected = 16 + n * rows * cols
    if len(img_raw) < expected:
        raise FormatError(f"images: truncated pixel block, expected {expected} bytes", len(img_raw))
    lab_raw = _read_bytes(labels_path)
    (m,) = _idx_header(lab_raw, IDX_LABELS_MAGIC, 1, "labels")
    if len(lab_raw) < 8 + m:
        raise FormatError(f"labels: truncated label block, expected {8 + m} bytes", len(lab_raw))
    if m != n:
        raise FormatError(f"{n} images but {m} labels", 4)
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=m, offset=8).astype(np.int64)
    x = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    k = max(int(labels.max()) + 1, len(class_names) if class_names else 0) if n else 1
    return LabeledDataset(x, labels, k, tuple(class_names) if class_names else None)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path,
              labels_path: str | Path) -> None:
    """Write uint8 images ``(n, rows, cols)`` and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def _find(data_dir: Path, stem: str) -> Path:
    for cand in (data_dir / stem, data_dir / f"{stem}.gz"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def load_idx_dir(data_dir: str | Path, class_names: Sequence[str] | None = None) -> LabeledDataset:
    """Concatenate the standard train and t10k IDX pairs found in ``data_dir``."""
    d = Path(data_dir)
    tr = load_idx(_find(d, "train-images-idx3-ubyte"), _find(d, "train-labels-idx1-ubyte"), class_names)
    te = load_idx(_find(d, "t10k-images-idx3-ubyte"), _find(d, "t10k-labels-idx1-ubyte"), class_names)
    k = max(tr.n_classes, te.n_classes)
    return LabeledDataset(np.vstack([tr.inputs, te.inputs]), np.concatenate([tr.labels, te.labels]),
                          k, tr.class_names)


# --- splitting ------------------------------------------------------------

def split_indices(n: int, rng: np.random.Generator,
                  fractions: tuple[float, float, float] = SPLIT_FRACTIONS
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/validation/test index sets, sizes rounded, remainder to test."""
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def make_task(data: LabeledDataset, rng: np.random.Generator, subset_train: int | None = None,
              subset_test: int | None = None) -> Task:
    tr, va, te = split_indices(len(data), rng)
    if subset_train is not None:
        tr = tr[:subset_train]
        va = va[:max(1, subset_train // 3)]
    if subset_test is not None:
        te = te[:subset_test]
    return Task(data.subset(tr), data.subset(va), data.subset(te))


def equalize_test_sets(tasks: Sequence[Task], rng: np.random.Generator) -> tuple[Task, ...]:
    """Trim every test set to the smallest one with a seeded subsample."""
    m = min(len(t.test) for t in tasks)
    out = []
    for t in tasks:
        if len(t.test) > m:
            keep = np.sort(rng.choice(len(t.test), size=m, replace=False))
            t = Task(t.train, t.validation, t.test.subset(keep))
        out.append(t)
    return tuple(out)


# --- task builders --------------------------------------------------------

def permutation_for(task_index: int, dim: int, seed: int) -> np.ndarray:
    """Pixel permutation of task ``task_index`` (0-based); task 0 is the identity."""
    if task_index == 0:
        return np.arange(dim)
    return np.random.default_rng([seed, 7, task_index]).permutation(dim)


def permuted_tasks(base: LabeledDataset, n_tasks: int, seed: int,
                   subset_train: int | None = None, subset_test: int | None = None) -> TaskSequence:
    if n_tasks < 1:
        raise ContractError("need at least one task")
    tasks = []
    for t in range(n_tasks):
        perm = permutation_for(t, base.dim, seed)
        permuted = LabeledDataset(base.inputs[:, perm], base.labels, base.n_classes, base.class_names)
        tasks.append(make_task(permuted, np.random.default_rng([seed, 11, t]), subset_train, subset_test))
    tasks = equalize_test_sets(tasks, np.random.default_rng([seed, 13]))
    return TaskSequence(tasks, "single", "permuted", base.n_classes)


def split_tasks(base: LabeledDataset, pairs: Sequence[tuple[int, int]], seed: int = 0,
                subset_train: int | None = None, subset_test: int | None = None,
                name: str = "split") -> TaskSequence:
    """One binary task per label pair; the pair's labels become 0 and 1."""
    flat = [c for pair in pairs for c in pair]
    if len(set(flat)) != len(flat):
        raise ContractError(f"label pairs overlap: {pairs}")
    present = set(np.unique(base.labels).tolist())
    missing = [c for c in flat if c not in present]
    if missing:
        raise ContractError(f"labels {missing} absent from the base dataset")
    tasks = []
    for t, (c0, c1) in enumerate(pairs):
        idx = np.flatnonzero((base.labels == c0) | (base.labels == c1))
        y = (base.labels[idx] == c1).astype(np.int64)
        names = None
        if base.class_names:
            names = (base.class_names[c0], base.class_names[c1])
        sub = LabeledDataset(base.inputs[idx], y, 2, names, idx)
        tasks.append(make_task(sub, np.random.default_rng([seed, 17, t]), subset_train, subset_test))
    tasks = equalize_test_sets(tasks, np.random.default_rng([seed, 19]))
    return TaskSequence(tasks, "multi", name, 2)


def synthetic_task_data(d: int, n: int, margin: float, rng: np.random.Generator,
                        center_scale: float = 1.0) -> LabeledDataset:
    """Two unit-covariance Gaussian blobs whose means are ``margin * sqrt(d)`` apart."""
    center = rng.normal(0.0, center_scale, size=d)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    half = 0.5 * margin * math.sqrt(d) * direction
    y = rng.permutation(np.arange(n) % 2)
    x = rng.normal(size=(n, d)) + center + np.where(y[:, None] == 1, half, -half)
    return LabeledDataset(x, y, 2)


def synthetic_tasks(n_tasks: int, d: int, n: int, margin: float | Sequence[float],
                    seed: int, center_scale: float = 1.0, head_mode: str = "single") -> TaskSequence:
    """Binary Gaussian-blob tasks; ``margin`` may be a scalar or one value per task."""
    if min(n_tasks, d, n) < 1:
        raise ContractError("n_tasks, d and n must be positive")
    margins = [float(margin)] * n_tasks if np.isscalar(margin) else [float(m) for m in margin]
    if len(margins) != n_tasks:
        raise ContractError(f"{len(margins)} margins for {n_tasks} tasks")
    tasks = []
    for t, m in enumerate(margins):
        data = synthetic_task_data(d, n, m, np.random.default_rng([seed, 23, t]), center_scale)
        tasks.append(make_task(data, np.random.default_rng([seed, 29, t])))
    tasks = equalize_test_sets(tasks, np.random.default_rng([seed, 31]))
    return TaskSequence(tuple(tasks), head_mode, "synthetic", 2)

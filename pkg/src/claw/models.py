"""Multi-layer networks built from adaptive, mean-field or plain dense layers.

All three share the same topology: a stack of ReLU hidden layers followed by
either one shared output head (``single``) or one head per task (``multi``).
Heads are created lazily at the first exposure to a task and seeded by the
task id, so creation order never changes their initial values.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from . import tensor as T
from .adaptive import AdaptiveVariationalLayer, LayerSnapshot, PosteriorSnapshot
from .errors import DimensionError, StructuralError, UnknownTaskError
from .tensor import Tensor

HEAD_MODES = ("single", "multi")


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / (n_in + n_out)), size=(n_in, n_out))


class DenseLayer:
    def __init__(self, n_in: int, n_out: int, activation: str = "relu",
                 rng: np.random.Generator | None = None, name: str = "layer"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name, self.n_in, self.n_out, self.activation = name, n_in, n_out, activation
        self.W = Tensor(_glorot(rng, n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"W": self.W, "b": self.b}

    def forward(self, x) -> Tensor:
        pre = T.add(T.matmul(x, self.W), self.b)
        return T.relu(pre) if self.activation == "relu" else pre


class MeanFieldLayer:
    """Factorised Gaussian weights with std = softplus(rho)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "relu",
                 rng: np.random.Generator | None = None, name: str = "layer",
                 init_std: float = math.exp(-3.0)):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name, self.n_in, self.n_out, self.activation = name, n_in, n_out, activation
        rho0 = math.log(math.expm1(init_std))
        self.mu_w = Tensor(_glorot(rng, n_in, n_out), requires_grad=True)
        self.rho_w = Tensor(np.full((n_in, n_out), rho0), requires_grad=True)
        self.mu_b = Tensor(np.zeros(n_out), requires_grad=True)
        self.rho_b = Tensor(np.full(n_out, rho0), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"mu_w": self.mu_w, "rho_w": self.rho_w, "mu_b": self.mu_b, "rho_b": self.rho_b}

    def variances(self) -> tuple[Tensor, Tensor]:
        return T.square(T.softplus(self.rho_w)), T.square(T.softplus(self.rho_b))

    def forward(self, x, eps: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
        if eps is None:
            w, b = self.mu_w, self.mu_b
        else:
            w = T.add(self.mu_w, T.mul(T.softplus(self.rho_w), eps[0]))
            b = T.add(self.mu_b, T.mul(T.softplus(self.rho_b), eps[1]))
        pre = T.add(T.matmul(x, w), b)
        return T.relu(pre) if self.activation == "relu" else pre


class HeadedNet:
    """Hidden stack plus single or per-task output heads."""

    layer_cls: type = DenseLayer

    def __init__(self, n_in: int, hidden: Iterable[int], n_classes: int,
                 head_mode: str = "multi", seed: int = 0):
        if head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}, got {head_mode!r}")
        hidden = list(hidden)
        if any(h <= 0 for h in hidden) or n_in <= 0 or n_classes <= 0:
            raise ValueError("layer widths must be positive")
        self.n_in, self.hidden, self.n_classes = n_in, hidden, n_classes
        self.head_mode, self.seed = head_mode, seed
        widths = [n_in] + hidden
        self.layers = [
            self.layer_cls(widths[i], widths[i + 1], "relu",
                           rng=np.random.default_rng([seed, 1, i]), name=f"hidden{i}")
            for i in range(len(hidden))
        ]
        self.heads: dict[int, object] = {}
        if head_mode == "single":
            self.heads[0] = self._new_head(0)

    def _new_head(self, task_id: int):
        name = "head" if self.head_mode == "single" else f"head{task_id}"
        width = self.hidden[-1] if self.hidden else self.n_in
        return self.layer_cls(width, self.n_classes, "identity",
                              rng=np.random.default_rng([self.seed, 2, task_id]), name=name)

    def has_head(self, task_id: int) -> bool:
        return self.head_mode == "single" or task_id in self.heads

    def head(self, task_id: int, create: bool = False):
        key = 0 if self.head_mode == "single" else task_id
        if key not in self.heads:
            if not create:
                raise UnknownTaskError(f"no output head for task {task_id}")
            self.heads[key] = self._new_head(task_id)
        return self.heads[key]

    def path(self, task_id: int, create: bool = False) -> list:
        """Layers touched by a forward pass for ``task_id``, input to output."""
        return self.layers + [self.head(task_id, create)]

    def all_layers(self) -> dict[str, object]:
        out = {l.name: l for l in self.layers}
        out.update({h.name: h for h in self.heads.values()})
        return out

    def _check_input(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"input shape {x.shape}, expected (batch, {self.n_in})")
        return x


class DeterministicModel(HeadedNet):
    layer_cls = DenseLayer

    def forward(self, x, task_id: int) -> Tensor:
        h = self._check_input(x)
        for layer in self.path(task_id):
            h = layer.forward(h)
        return h

    def state(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": t.data.copy() for l in self.all_layers().values()
                for k, t in l.parameters().items()}

    def named_parameters(self, task_id: int | None = None) -> dict[str, Tensor]:
        layers = self.all_layers().values() if task_id is None else self.path(task_id)
        return {f"{l.name}.{k}": t for l in layers for k, t in l.parameters().items()}


class MeanFieldModel(HeadedNet):
    layer_cls = MeanFieldLayer

    def forward(self, x, task_id: int, rng: np.random.Generator | None = None) -> Tensor:
        """One forward pass; samples weights from ``rng`` when given, else uses means."""
        h = self._check_input(x)
        for layer in self.path(task_id):
            eps = None
            if rng is not None:
                eps = (rng.standard_normal((layer.n_in, layer.n_out)), rng.standard_normal(layer.n_out))
            h = layer.forward(h, eps)
        return h

    def snapshot(self) -> dict[str, tuple[np.ndarray, ...]]:
        snap = {}
        for l in self.all_layers().values():
            vw, vb = l.variances()
            snap[l.name] = (l.mu_w.data.copy(), vw.data.copy(), l.mu_b.data.copy(), vb.data.copy())
        return snap

    def load(self, state: dict[str, dict[str, np.ndarray]]) -> None:
        for name, layer in self.all_layers().items():
            for k, t in layer.parameters().items():
                t.data[...] = state[name][k]

    def raw_state(self) -> dict[str, dict[str, np.ndarray]]:
        return {n: {k: t.data.copy() for k, t in l.parameters().items()}
                for n, l in self.all_layers().items()}


class ClawModel(HeadedNet):
    layer_cls = AdaptiveVariationalLayer

    def forward(self, x, task_id: int, eps: list | None = None, mode: str = "sample",
                ablation: str = "none") -> Tensor:
        """Logits for ``task_id``. ``eps`` holds one array per layer on the path."""
        h = self._check_input(x)
        path = self.path(task_id)
        if mode == "sample" and ablation not in ("always_adapt", "never_adapt"):
            if eps is None or len(eps) != len(path):
                raise ValueError("sample mode needs one eps array per layer")
        for i, layer in enumerate(path):
            h = layer.forward(h, None if eps is None else eps[i], mode, ablation)
        return h

    def snapshot(self, ablation: str = "none") -> PosteriorSnapshot:
        return PosteriorSnapshot(
            {n: LayerSnapshot.capture(l, ablation) for n, l in self.all_layers().items()}, ablation)

    def load_snapshot(self, snap: PosteriorSnapshot) -> None:
        """Overwrite parameters from ``snap``, creating any missing heads."""
        for name in snap.layers:
            if name.startswith("head") and self.head_mode == "multi" and name not in self.all_layers():
                self.head(int(name[4:]), create=True)
        layers = self.all_layers()
        for name, ls in snap.layers.items():
            if name not in layers:
                raise StructuralError(f"snapshot layer {name!r} has no counterpart in the model")
            layers[name].load(ls)

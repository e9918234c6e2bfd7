"""Sequential trainers: CLAW plus VCL, VCL+coreset, EWC and fine-tuning baselines.

Every trainer exposes the same surface::

    trainer = ClawTrainer(cfg, n_in=..., n_classes=..., hidden=[...], head_mode=...)
    trainer.observe_task(task_id, train_dataset)
    trainer.evaluate(test_dataset, task_id)   # accuracy in [0, 1]

Randomness comes exclusively from generators seeded by ``(cfg.seed, task_id,
stream)``, so identical inputs give bit-identical parameters.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .adaptive import (
    ABLATIONS,
    PosteriorSnapshot,
    gaussian_kl,
    kl_to_logscale_prior,
    kl_to_previous_posterior,
    project_parameters,
    S_MAX,
    S_MIN,
)
from .coreset import kcenter_coreset
from .data import LabeledDataset
from .errors import ContractError, TrainingDivergenceError, UnknownTaskError
from .models import ClawModel, DeterministicModel, MeanFieldModel
from .tensor import Adam, Tensor

# streams for np.random.default_rng([seed, task_id, stream])
_TRAIN, _META, _PREDICT, _FISHER, _CORESET = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    minibatch: int = 128
    mc_samples: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    omega1: float = 0.05
    omega2: float = 0.02
    seed: int = 0
    ablation: str = "none"
    predict_samples: int = 10
    predict_mode: str = "mean"
    ewc_lambda: float = 100.0
    coreset_size: int = 200
    coreset_epochs: int = 5
    n_tasks: int = 5
    likelihood_weight: float = 1.0

    def __post_init__(self):
        for name in ("epochs", "minibatch", "mc_samples", "predict_samples"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.ablation not in ABLATIONS:
            raise ContractError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.predict_mode not in ("mean", "sample"):
            raise ContractError("predict_mode must be 'mean' or 'sample'")


def _batches(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start:start + size]


def _accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def _check_nonempty(ds: LabeledDataset) -> None:
    if ds is None or len(ds) == 0:
        raise ContractError("training set is empty")


def _finite_or_raise(loss: Tensor, step: int) -> None:
    v = loss.item()
    if not math.isfinite(v):
        raise TrainingDivergenceError(step, v)


def _params_finite_or_raise(params: Sequence[Tensor], step: int) -> None:
    if not all(np.all(np.isfinite(t.data)) for t in params):
        raise TrainingDivergenceError(step, math.nan)


# --- CLAW -----------------------------------------------------------------

@dataclass
class TaskAdaptationStore:
    """Per task, per layer: the (a, s) pair to substitute at test time."""

    entries: dict[int, dict[str, tuple[np.ndarray, np.ndarray]]] = field(default_factory=dict)
    # general s per layer, the warm start for the next task's meta update
    general: dict[str, np.ndarray] = field(default_factory=dict)

    def put(self, task_id: int, model: ClawModel, s_task: dict[str, np.ndarray]) -> None:
        entry = {}
        for layer in model.path(task_id):
            entry[layer.name] = (layer.a.data.copy(), s_task[layer.name].copy())
        self.entries[task_id] = entry

    def get(self, task_id: int) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        if task_id not in self.entries:
            raise UnknownTaskError(f"no stored adaptation for task {task_id}")
        return self.entries[task_id]

    def __contains__(self, task_id: int) -> bool:
        return task_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def draw_eps(model: ClawModel, task_id: int, rng: np.random.Generator, batch: int | None = None):
    """One standard-normal draw per neuron (or per example and neuron) on the task path."""
    shape = (lambda n: (n,)) if batch is None else (lambda n: (batch, n))
    return [rng.standard_normal(shape(layer.n_out)) for layer in model.path(task_id)]


def claw_kl(model: ClawModel, task_id: int, prev: PosteriorSnapshot | None,
            ablation: str = "none") -> Tensor:
    """KL of every layer on the task path to its previous posterior, or to the
    log-scale prior for layers that have never been trained."""
    total = Tensor(0.0)
    for layer in model.path(task_id):
        if prev is not None and layer.name in prev:
            total = T.add(total, kl_to_previous_posterior(layer, prev[layer.name], ablation))
        elif ablation != "never_adapt":
            total = T.add(total, kl_to_logscale_prior(layer))
    return total


def elbo(model: ClawModel, x: np.ndarray, y: np.ndarray, task_id: int,
         prev: PosteriorSnapshot | None, n_total: int, mc_samples: int,
         rng: np.random.Generator | None = None, eps: list | None = None,
         ablation: str = "none", likelihood_weight: float = 1.0) -> Tensor:
    """Negative ELBO for one minibatch: KL - (N / |batch|) * mean over draws of sum log p(y|x).

    Either ``rng`` (fresh draws) or ``eps`` (a list with one per-layer eps list
    per Monte-Carlo draw) supplies the noise.
    """
    if mc_samples < 1:
        raise ContractError("mc_samples must be at least 1")
    kl = claw_kl(model, task_id, prev, ablation)
    nll = Tensor(0.0)
    for e in range(mc_samples):
        draw = eps[e] if eps is not None else draw_eps(model, task_id, rng)
        logits = model.forward(x, task_id, draw, "sample", ablation)
        nll = T.add(nll, T.softmax_cross_entropy(logits, y, reduction="sum"))
    scale = likelihood_weight * n_total / (len(y) * mc_samples)
    return T.add(kl, T.mul(nll, scale))


def _claw_trainables(model: ClawModel, task_id: int, ablation: str) -> list[Tensor]:
    names = ["gamma", "bias_gamma"]
    if ablation != "never_adapt":
        names.append("a")
    if ablation in ("none", "fixed_s"):
        names.append("p")
    params = []
    for layer in model.path(task_id, create=True):
        params.extend(getattr(layer, n) for n in names)
    return params


def claw_train_task(model: ClawModel, store: TaskAdaptationStore | None,
                    prev: PosteriorSnapshot | None, dataset: LabeledDataset, task_id: int,
                    cfg: TrainConfig) -> PosteriorSnapshot:
    """Train one task and return the end-of-task posterior snapshot.

    Adam runs over gamma, biases, a and p of every layer on the task path;
    ``s`` only moves through :func:`meta_update_s`, which runs once after the
    epoch loop and writes the task's (a, s_t) into ``store``. Training starts
    from the stored general s and leaves the layers holding s_t.
    """
    _check_nonempty(dataset)
    rng = np.random.default_rng([cfg.seed, task_id, _TRAIN])
    opt = Adam(_claw_trainables(model, task_id, cfg.ablation), cfg.lr, cfg.beta1, cfg.beta2)
    layers = model.path(task_id)
    if store is not None:
        for layer in layers:
            if layer.name in store.general:
                layer.s.data[...] = store.general[layer.name]
    n = len(dataset)
    step = 0
    for _ in range(cfg.epochs):
        for idx in _batches(n, cfg.minibatch, rng):
            opt.zero_grad()
            loss = elbo(model, dataset.inputs[idx], dataset.labels[idx], task_id, prev, n,
                        cfg.mc_samples, rng=rng, ablation=cfg.ablation,
                        likelihood_weight=cfg.likelihood_weight)
            _finite_or_raise(loss, step)
            loss.backward()
            opt.step()
            _params_finite_or_raise(opt.params, step)
            for layer in layers:
                project_parameters(layer)
            step += 1
    if cfg.ablation == "fixed_s" or store is None:
        return model.snapshot(cfg.ablation)
    rng_meta = np.random.default_rng([cfg.seed, task_id, _META])
    s_task, general = meta_update_s(model, dataset, task_id, cfg.omega1, cfg.omega2, rng_meta,
                                    cfg.ablation)
    # the posterior carries the general s; live layers keep this task's s_t
    snap = model.snapshot(cfg.ablation)
    store.put(task_id, model, s_task)
    store.general.update(general)
    for layer in layers:
        layer.s.data[...] = s_task[layer.name]
    return snap


def _grad_s(model: ClawModel, x: np.ndarray, y: np.ndarray, task_id: int,
            ablation: str) -> dict[str, np.ndarray]:
    """Gradient of the summed cross-entropy w.r.t. every s on the task path."""
    layers = model.path(task_id)
    for layer in layers:
        layer.s.grad = None
    loss = T.softmax_cross_entropy(model.forward(x, task_id, mode="mean", ablation=ablation),
                                   y, reduction="sum")
    loss.backward()
    out = {}
    for layer in layers:
        g = layer.s.grad
        out[layer.name] = np.zeros_like(layer.s.data) if g is None else g.copy()
        layer.s.grad = None
    # clear the other grads the pass populated
    for layer in layers:
        for t in layer.parameters().values():
            t.grad = None
    return out


def meta_update_s(model: ClawModel, dataset: LabeledDataset, task_id: int, omega1: float,
                  omega2: float, rng: np.random.Generator, ablation: str = "none"
                  ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Two-half update of the maximum adaptation s.

    The shuffled task data is split into a first half of ceil(N/2) points and
    the remainder. The task value is one gradient step from the general value
    on the first half; the general value then steps along the second-half
    gradient evaluated at the task value (first-order). Both are clamped to
    [S_MIN, S_MAX]. The model is left holding the updated general s.

    Returns ``(task_s, general_s)`` keyed by layer name.
    """
    n = len(dataset)
    if n < 2:
        raise ContractError("meta_update_s needs at least two examples")
    perm = rng.permutation(n)
    half = (n + 1) // 2
    first, second = perm[:half], perm[half:]
    layers = model.path(task_id)
    general = {l.name: l.s.data.copy() for l in layers}

    g1 = _grad_s(model, dataset.inputs[first], dataset.labels[first], task_id, ablation)
    task_s = {name: np.clip(general[name] - (2.0 * omega1 / n) * g1[name], S_MIN, S_MAX)
              for name in general}
    for l in layers:
        l.s.data[...] = task_s[l.name]
    g2 = _grad_s(model, dataset.inputs[second], dataset.labels[second], task_id, ablation)
    new_general = {name: np.clip(general[name] - (2.0 * omega2 / n) * g2[name], S_MIN, S_MAX)
                   for name in general}
    for l in layers:
        l.s.data[...] = new_general[l.name]
    return task_s, new_general


def claw_predict(model: ClawModel, store: TaskAdaptationStore | None, x: np.ndarray,
                 task_id: int, samples: int = 10, mode: str = "mean",
                 rng: np.random.Generator | None = None, ablation: str = "none") -> np.ndarray:
    """Class probabilities for ``task_id`` with that task's stored (a, s) swapped in.

    ``store=None`` predicts with the live parameters. Live values are restored
    before returning.
    """
    layers = model.path(task_id)
    saved = None
    if store is not None:
        entry = store.get(task_id)
        saved = {l.name: (l.a.data.copy(), l.s.data.copy()) for l in layers}
        for l in layers:
            if l.name in entry:
                l.a.data[...], l.s.data[...] = entry[l.name]
    try:
        if mode == "mean" or ablation in ("always_adapt", "never_adapt"):
            return T.softmax(model.forward(x, task_id, mode="mean", ablation=ablation).data)
        if mode != "sample":
            raise ValueError(f"unknown prediction mode {mode!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        probs = np.zeros((len(x), model.n_classes))
        for _ in range(samples):
            eps = draw_eps(model, task_id, rng)
            probs += T.softmax(model.forward(x, task_id, eps, "sample", ablation).data)
        return probs / samples
    finally:
        if saved is not None:
            for l in layers:
                l.a.data[...], l.s.data[...] = saved[l.name]


class Trainer:
    """Uniform init / observe_task / evaluate surface."""

    name = "base"

    def __init__(self, cfg: TrainConfig, n_in: int, n_classes: int, hidden: Sequence[int],
                 head_mode: str = "multi"):
        self.cfg = cfg
        self.n_in, self.n_classes, self.hidden, self.head_mode = n_in, n_classes, list(hidden), head_mode
        self.seen: list[int] = []

    def observe_task(self, task_id: int, dataset: LabeledDataset) -> None:
        raise NotImplementedError

    def predict_proba(self, x: np.ndarray, task_id: int) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, dataset: LabeledDataset, task_id: int) -> float:
        return _accuracy(self.predict_proba(dataset.inputs, task_id), dataset.labels)


class ClawTrainer(Trainer):
    name = "claw"

    def __init__(self, cfg, n_in, n_classes, hidden, head_mode="multi"):
        super().__init__(cfg, n_in, n_classes, hidden, head_mode)
        self.model = ClawModel(n_in, hidden, n_classes, head_mode, seed=cfg.seed)
        self.store = TaskAdaptationStore()
        self.posterior: PosteriorSnapshot | None = None

    def observe_task(self, task_id, dataset):
        self.posterior = claw_train_task(self.model, self.store, self.posterior, dataset,
                                         task_id, self.cfg)
        self.seen.append(task_id)

    def predict_proba(self, x, task_id):
        if not self.model.has_head(task_id):
            raise UnknownTaskError(f"task {task_id} has not been observed")
        store = None if self.cfg.ablation == "fixed_s" else self.store
        rng = np.random.default_rng([self.cfg.seed, task_id, _PREDICT])
        return claw_predict(self.model, store, x, task_id, self.cfg.predict_samples,
                            self.cfg.predict_mode, rng, self.cfg.ablation)


# --- VCL ------------------------------------------------------------------

VclPosterior = dict  # layer name -> (mu_w, var_w, mu_b, var_b)


def vcl_kl(model: MeanFieldModel, task_id: int, prev: VclPosterior | None) -> Tensor:
    """KL to the previous posterior, or to N(0, 1) for untrained layers."""
    total = Tensor(0.0)
    for layer in model.path(task_id):
        vw, vb = layer.variances()
        if prev is not None and layer.name in prev:
            mw, pvw, mb, pvb = prev[layer.name]
        else:
            mw, pvw = np.zeros(layer.mu_w.shape), np.ones(layer.mu_w.shape)
            mb, pvb = np.zeros(layer.mu_b.shape), np.ones(layer.mu_b.shape)
        total = T.add(total, gaussian_kl(layer.mu_w, vw, mw, pvw))
        total = T.add(total, gaussian_kl(layer.mu_b, vb, mb, pvb))
    return total


def vcl_elbo(model: MeanFieldModel, x, y, task_id: int, prev: VclPosterior | None,
             n_total: int, mc_samples: int, rng: np.random.Generator,
             likelihood_weight: float = 1.0) -> Tensor:
    kl = vcl_kl(model, task_id, prev)
    nll = Tensor(0.0)
    for _ in range(mc_samples):
        nll = T.add(nll, T.softmax_cross_entropy(model.forward(x, task_id, rng), y, reduction="sum"))
    return T.add(kl, T.mul(nll, likelihood_weight * n_total / (len(y) * mc_samples)))


def _vcl_fit(model: MeanFieldModel, prev: VclPosterior | None, parts, cfg: TrainConfig,
             epochs: int, rng: np.random.Generator) -> None:
    """Minibatch Adam on the negative ELBO; ``parts`` is a list of (task_id, dataset)."""
    params = []
    for task_id, _ in parts:
        for layer in model.path(task_id, create=True):
            for t in layer.parameters().values():
                if all(t is not q for q in params):
                    params.append(t)
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2)
    step = 0
    for _ in range(epochs):
        for task_id, ds in parts:
            for idx in _batches(len(ds), cfg.minibatch, rng):
                opt.zero_grad()
                loss = vcl_elbo(model, ds.inputs[idx], ds.labels[idx], task_id, prev, len(ds),
                                cfg.mc_samples, rng, cfg.likelihood_weight)
                _finite_or_raise(loss, step)
                loss.backward()
                opt.step()
                step += 1


def vcl_train_task(model: MeanFieldModel, prev: VclPosterior | None, dataset: LabeledDataset,
                   task_id: int, cfg: TrainConfig) -> VclPosterior:
    _check_nonempty(dataset)
    rng = np.random.default_rng([cfg.seed, task_id, _TRAIN])
    _vcl_fit(model, prev, [(task_id, dataset)], cfg, cfg.epochs, rng)
    return model.snapshot()


class VCLTrainer(Trainer):
    """Mean-field VCL; with ``coreset=True`` a K-center coreset is held out of
    training and used to fine-tune a throwaway copy before prediction."""

    name = "vcl"

    def __init__(self, cfg, n_in, n_classes, hidden, head_mode="multi", coreset: bool = False):
        super().__init__(cfg, n_in, n_classes, hidden, head_mode)
        self.model = MeanFieldModel(n_in, hidden, n_classes, head_mode, seed=cfg.seed)
        self.posterior: VclPosterior | None = None
        self.use_coreset = coreset
        self.coresets: list[tuple[int, LabeledDataset]] = []
        self._predictor: MeanFieldModel | None = None
        if coreset:
            self.name = "vcl-coreset"

    def _coreset_quota(self) -> int:
        return max(1, self.cfg.coreset_size // max(1, self.cfg.n_tasks))

    def observe_task(self, task_id, dataset):
        _check_nonempty(dataset)
        train = dataset
        if self.use_coreset:
            k = min(self._coreset_quota(), len(dataset) - 1)
            picked = np.asarray(kcenter_coreset(dataset.inputs, k), dtype=np.int64)
            rest = np.setdiff1d(np.arange(len(dataset)), picked)
            self.coresets.append((task_id, dataset.subset(picked)))
            train = dataset.subset(rest)
        self.posterior = vcl_train_task(self.model, self.posterior, train, task_id, self.cfg)
        self.seen.append(task_id)
        self._predictor = None

    def _prediction_model(self) -> MeanFieldModel:
        if not self.use_coreset or not self.coresets:
            return self.model
        if self._predictor is None:
            pred = copy.deepcopy(self.model)
            rng = np.random.default_rng([self.cfg.seed, len(self.seen), _CORESET])
            _vcl_fit(pred, self.posterior, self.coresets, self.cfg, self.cfg.coreset_epochs, rng)
            self._predictor = pred
        return self._predictor

    def predict_proba(self, x, task_id):
        model = self._prediction_model()
        if not model.has_head(task_id):
            raise UnknownTaskError(f"task {task_id} has not been observed")
        if self.cfg.predict_mode == "mean":
            return T.softmax(model.forward(x, task_id).data)
        rng = np.random.default_rng([self.cfg.seed, task_id, _PREDICT])
        probs = np.zeros((len(x), self.n_classes))
        for _ in range(self.cfg.predict_samples):
            probs += T.softmax(model.forward(x, task_id, rng).data)
        return probs / self.cfg.predict_samples


# --- EWC and fine-tuning --------------------------------------------------

@dataclass(frozen=True)
class EwcAnchor:
    values: dict[str, np.ndarray]
    fisher: dict[str, np.ndarray]


def fisher_diagonal(model: DeterministicModel, dataset: LabeledDataset, task_id: int,
                    rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Mean squared per-example gradient of log p(y_hat | x), y_hat drawn from the model."""
    params = model.named_parameters(task_id)
    fisher = {k: np.zeros_like(t.data) for k, t in params.items()}
    for i in range(len(dataset)):
        x = dataset.inputs[i:i + 1]
        logits = model.forward(x, task_id)
        probs = T.softmax(logits.data)[0]
        y_hat = rng.choice(len(probs), p=probs / probs.sum())
        for t in params.values():
            t.grad = None
        T.softmax_cross_entropy(logits, np.array([y_hat]), reduction="sum").backward()
        for k, t in params.items():
            if t.grad is not None:
                fisher[k] += t.grad * t.grad
    for t in params.values():
        t.grad = None
    return {k: v / len(dataset) for k, v in fisher.items()}


def ewc_penalty(model: DeterministicModel, anchors: Sequence[EwcAnchor], task_id: int,
                lam: float) -> Tensor:
    total = Tensor(0.0)
    if lam == 0.0:
        return total
    params = model.named_parameters(task_id)
    for anchor in anchors:
        for k, theta_star in anchor.values.items():
            if k in params:
                diff = T.sub(params[k], theta_star)
                total = T.add(total, T.sum(T.mul(T.square(diff), anchor.fisher[k])))
    return T.mul(total, 0.5 * lam)


def ewc_train_task(model: DeterministicModel, anchors: list[EwcAnchor], dataset: LabeledDataset,
                   task_id: int, lam: float, cfg: TrainConfig, compute_fisher: bool = True
                   ) -> EwcAnchor | None:
    """Adam on mean cross-entropy plus the quadratic EWC penalty; appends and
    returns the new anchor (or returns None when ``compute_fisher`` is off)."""
    _check_nonempty(dataset)
    if lam < 0:
        raise ContractError("EWC lambda must be non-negative")
    rng = np.random.default_rng([cfg.seed, task_id, _TRAIN])
    params = list(model.named_parameters(task_id).values()) if model.has_head(task_id) else None
    if params is None:
        model.head(task_id, create=True)
        params = list(model.named_parameters(task_id).values())
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2)
    step = 0
    for _ in range(cfg.epochs):
        for idx in _batches(len(dataset), cfg.minibatch, rng):
            opt.zero_grad()
            loss = T.softmax_cross_entropy(model.forward(dataset.inputs[idx], task_id),
                                           dataset.labels[idx])
            if anchors and lam > 0:
                loss = T.add(loss, ewc_penalty(model, anchors, task_id, lam))
            _finite_or_raise(loss, step)
            loss.backward()
            opt.step()
            step += 1
    if not compute_fisher:
        return None
    fisher = fisher_diagonal(model, dataset, task_id,
                             np.random.default_rng([cfg.seed, task_id, _FISHER]))
    values = {k: t.data.copy() for k, t in model.named_parameters(task_id).items()}
    anchor = EwcAnchor(values, fisher)
    anchors.append(anchor)
    return anchor


def finetune_train_task(model: DeterministicModel, dataset: LabeledDataset, task_id: int,
                        cfg: TrainConfig) -> None:
    ewc_train_task(model, [], dataset, task_id, 0.0, cfg, compute_fisher=False)


class EWCTrainer(Trainer):
    name = "ewc"

    def __init__(self, cfg, n_in, n_classes, hidden, head_mode="multi"):
        super().__init__(cfg, n_in, n_classes, hidden, head_mode)
        self.model = DeterministicModel(n_in, hidden, n_classes, head_mode, seed=cfg.seed)
        self.anchors: list[EwcAnchor] = []

    def observe_task(self, task_id, dataset):
        ewc_train_task(self.model, self.anchors, dataset, task_id, self.cfg.ewc_lambda, self.cfg)
        self.seen.append(task_id)

    def predict_proba(self, x, task_id):
        if not self.model.has_head(task_id):
            raise UnknownTaskError(f"task {task_id} has not been observed")
        return T.softmax(self.model.forward(x, task_id).data)


class FinetuneTrainer(EWCTrainer):
    name = "finetune"

    def observe_task(self, task_id, dataset):
        finetune_train_task(self.model, dataset, task_id, self.cfg)
        self.seen.append(task_id)


METHODS = ("claw", "vcl", "vcl-coreset", "ewc", "finetune")


def make_trainer(method: str, cfg: TrainConfig, n_in: int, n_classes: int,
                 hidden: Sequence[int], head_mode: str = "multi") -> Trainer:
    if method == "claw":
        return ClawTrainer(cfg, n_in, n_classes, hidden, head_mode)
    if method == "vcl":
        return VCLTrainer(cfg, n_in, n_classes, hidden, head_mode)
    if method == "vcl-coreset":
        return VCLTrainer(cfg, n_in, n_classes, hidden, head_mode, coreset=True)
    if method == "ewc":
        return EWCTrainer(cfg, n_in, n_classes, hidden, head_mode)
    if method == "finetune":
        return FinetuneTrainer(cfg, n_in, n_classes, hidden, head_mode)
    raise ContractError(f"unknown method {method!r}; expected one of {METHODS}")

"""Per-neuron adaptive variational dense layers.

Each output neuron j carries an adaptation probability ``p_j``, an
unconstrained adaptation value ``a_j`` and a maximum adaptation ``s_j``. The
adaptation strength is ``b_j = s_j * sigmoid(a_j) - 1`` and the neuron's whole
incoming weight column (and bias) is scaled by ``1 + b_j * alpha_j`` where
``alpha_j ~ N(p_j, p_j (1 - p_j))`` is the Gaussian stand-in for a Bernoulli
adaptation switch. Sampling uses ``alpha = p + sqrt(p (1 - p)) * eps``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import tensor as T
from .errors import DimensionError, DomainError, FormatError, StructuralError
from .tensor import Tensor

P_MIN = 1e-4
S_MIN = 1.0 + 1e-3
S_MAX = 20.0
VAR_FLOOR = 1e-8
# E[log|eps|] for eps ~ N(0, 1)
ELOG_EPS = -(np.euler_gamma + math.log(2.0)) / 2.0

ABLATIONS = ("none", "fixed_s", "always_adapt", "never_adapt")
SNAPSHOT_MAGIC = b"CLAW1\n"


def expected_log_abs_eps() -> float:
    return ELOG_EPS


def bernoulli_moment_match(p: float) -> tuple[float, float]:
    """Mean and variance of a Bernoulli(p) switch."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    return p, p * (1.0 - p)


def adaptation_multiplier(p: float, a: float, s: float, eps: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if s < S_MIN:
        raise DomainError(f"s must be at least {S_MIN}, got {s}")
    b = s / (1.0 + math.exp(-a)) - 1.0
    return 1.0 + b * p + b * math.sqrt(p * (1.0 - p)) * eps


@dataclass(frozen=True)
class InducedGaussian:
    mean: np.ndarray
    var: np.ndarray
    bias_mean: np.ndarray
    bias_var: np.ndarray


class AdaptiveVariationalLayer:
    def __init__(self, n_in: int, n_out: int, activation: str = "relu",
                 rng: np.random.Generator | None = None, name: str = "layer"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        std = math.sqrt(2.0 / (n_in + n_out))
        self.gamma = Tensor(rng.normal(0.0, std, size=(n_in, n_out)), requires_grad=True)
        self.bias_gamma = Tensor(np.zeros(n_out), requires_grad=True)
        self.p = Tensor(np.full(n_out, 0.5), requires_grad=True)
        self.a = Tensor(np.zeros(n_out), requires_grad=True)
        self.s = Tensor(np.full(n_out, 2.0), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "bias_gamma": self.bias_gamma,
                "p": self.p, "a": self.a, "s": self.s}

    def strength(self) -> Tensor:
        """b = s * sigmoid(a) - 1."""
        return T.sub(T.mul(self.s, T.sigmoid(self.a)), 1.0)

    def multiplier(self, eps: np.ndarray | None = None, mode: str = "sample",
                   ablation: str = "none") -> Tensor | None:
        """Per-neuron (or per-example, per-neuron) scale ``1 + b * alpha``.

        Returns ``None`` under ``never_adapt`` where the scale is exactly 1.
        """
        if ablation == "never_adapt":
            return None
        b = self.strength()
        if ablation == "always_adapt":
            return T.add(b, 1.0)
        if mode == "mean":
            alpha = self.p
        elif mode == "sample":
            if eps is None:
                raise ValueError("sample mode needs eps")
            eps = np.asarray(eps, dtype=np.float64)
            if eps.shape[-1] != self.n_out:
                raise DimensionError(f"eps shape {eps.shape} does not match {self.n_out} neurons")
            sd = T.sqrt(T.mul(self.p, T.sub(1.0, self.p)))
            alpha = T.add(self.p, T.mul(sd, eps))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return T.add(T.mul(b, alpha), 1.0)

    def forward(self, x, eps: np.ndarray | None = None, mode: str = "sample",
                ablation: str = "none") -> Tensor:
        x = T.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"{self.name}: input shape {x.shape}, expected (batch, {self.n_in})")
        pre = T.add(T.matmul(x, self.gamma), self.bias_gamma)
        m = self.multiplier(eps, mode, ablation)
        if m is not None:
            # scaling a neuron's column and bias equals scaling its pre-activation
            pre = T.mul(pre, m)
        return T.relu(pre) if self.activation == "relu" else pre

    def induced_tensors(self, ablation: str = "none") -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Differentiable (weight mean, weight var, bias mean, bias var)."""
        if ablation == "never_adapt":
            wv = Tensor(np.full((self.n_in, self.n_out), VAR_FLOOR))
            bv = Tensor(np.full(self.n_out, VAR_FLOOR))
            return self.gamma, wv, self.bias_gamma, bv
        b = self.strength()
        if ablation == "always_adapt":
            scale = T.add(b, 1.0)
            wv = Tensor(np.full((self.n_in, self.n_out), VAR_FLOOR))
            bv = Tensor(np.full(self.n_out, VAR_FLOOR))
            return T.mul(self.gamma, scale), wv, T.mul(self.bias_gamma, scale), bv
        scale = T.add(T.mul(b, self.p), 1.0)
        spread = T.mul(T.square(b), T.mul(self.p, T.sub(1.0, self.p)))
        wm = T.mul(self.gamma, scale)
        wv = T.add(T.mul(T.square(self.gamma), spread), VAR_FLOOR)
        bm = T.mul(self.bias_gamma, scale)
        bv = T.add(T.mul(T.square(self.bias_gamma), spread), VAR_FLOOR)
        return wm, wv, bm, bv

    def load(self, snap: "LayerSnapshot") -> None:
        if (snap.n_in, snap.n_out) != (self.n_in, self.n_out):
            raise StructuralError(f"{self.name}: snapshot shape {(snap.n_in, snap.n_out)} "
                                  f"vs layer {(self.n_in, self.n_out)}")
        for key, t in self.parameters().items():
            t.data[...] = getattr(snap, key)


def sample_forward(layer: AdaptiveVariationalLayer, x, eps=None, mode: str = "sample",
                   ablation: str = "none") -> Tensor:
    return layer.forward(x, eps, mode, ablation)


def induced_gaussian(layer: AdaptiveVariationalLayer, ablation: str = "none") -> InducedGaussian:
    wm, wv, bm, bv = layer.induced_tensors(ablation)
    return InducedGaussian(wm.data.copy(), wv.data.copy(), bm.data.copy(), bv.data.copy())


def _check_domain(layer: AdaptiveVariationalLayer) -> None:
    p, s = layer.p.data, layer.s.data
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError(f"{layer.name}: p must lie strictly inside (0, 1)")
    if np.any(~(s >= S_MIN)):
        raise DomainError(f"{layer.name}: s must be at least {S_MIN}")


def kl_to_logscale_prior(layer: AdaptiveVariationalLayer) -> Tensor:
    """KL to the log-scale prior, one term per neuron, additive constant dropped.

    Per neuron: -log s + log(1 + e^-a) - 0.5 log p - 0.5 log(1 - p) + E log|eps|.
    """
    _check_domain(layer)
    per_neuron = T.add(
        T.add(T.neg(T.log(layer.s)), T.softplus(T.neg(layer.a))),
        T.mul(T.add(T.log(layer.p), T.log(T.sub(1.0, layer.p))), -0.5),
    )
    return T.add(T.sum(per_neuron), ELOG_EPS * layer.n_out)


def gaussian_kl(mu_q, var_q, mu_p: np.ndarray, var_p: np.ndarray) -> Tensor:
    """Summed KL(N(mu_q, var_q) || N(mu_p, var_p)); the p side is constant."""
    mu_q, var_q = T.as_tensor(mu_q), T.as_tensor(var_q)
    var_p = np.asarray(var_p, dtype=np.float64)
    mu_p = np.asarray(mu_p, dtype=np.float64)
    if mu_q.shape != mu_p.shape or var_q.shape != var_p.shape:
        raise StructuralError(f"KL shape mismatch {mu_q.shape} vs {mu_p.shape}")
    # guard for the log only; layers already floor their variance at VAR_FLOOR
    var_q_safe = T.clamp_min(var_q, 1e-300)
    terms = T.add(
        T.mul(T.sub(np.log(var_p), T.log(var_q_safe)), 0.5),
        T.div(T.add(var_q, T.square(T.sub(mu_q, mu_p))), 2.0 * var_p),
    )
    return T.sub(T.sum(terms), 0.5 * mu_p.size)


def kl_to_previous_posterior(layer: AdaptiveVariationalLayer, prev: "LayerSnapshot",
                             ablation: str = "none") -> Tensor:
    if (prev.n_in, prev.n_out) != (layer.n_in, layer.n_out):
        raise StructuralError(f"{layer.name}: snapshot shape {(prev.n_in, prev.n_out)} "
                              f"vs layer {(layer.n_in, layer.n_out)}")
    wm, wv, bm, bv = layer.induced_tensors(ablation)
    g = prev.induced
    return T.add(gaussian_kl(wm, wv, g.mean, g.var), gaussian_kl(bm, bv, g.bias_mean, g.bias_var))


def project_parameters(layer: AdaptiveVariationalLayer) -> None:
    """Clamp p into [P_MIN, 1 - P_MIN] and s into [S_MIN, S_MAX], in place."""
    np.clip(layer.p.data, P_MIN, 1.0 - P_MIN, out=layer.p.data)
    np.clip(layer.s.data, S_MIN, S_MAX, out=layer.s.data)


# --- snapshots ------------------------------------------------------------

@dataclass(frozen=True)
class LayerSnapshot:
    name: str
    n_in: int
    n_out: int
    activation: str
    gamma: np.ndarray
    bias_gamma: np.ndarray
    p: np.ndarray
    a: np.ndarray
    s: np.ndarray
    induced: InducedGaussian

    @classmethod
    def capture(cls, layer: AdaptiveVariationalLayer, ablation: str = "none") -> "LayerSnapshot":
        arrays = {k: _frozen(t.data) for k, t in layer.parameters().items()}
        g = induced_gaussian(layer, ablation)
        induced = InducedGaussian(*(_frozen(v) for v in (g.mean, g.var, g.bias_mean, g.bias_var)))
        return cls(layer.name, layer.n_in, layer.n_out, layer.activation, induced=induced, **arrays)


def _frozen(x: np.ndarray) -> np.ndarray:
    y = np.array(x, dtype=np.float64, copy=True)
    y.flags.writeable = False
    return y


@dataclass(frozen=True)
class PosteriorSnapshot:
    """Immutable copy of every layer's variational parameters after a task."""

    layers: Mapping[str, LayerSnapshot]
    ablation: str = "none"

    def __contains__(self, name: str) -> bool:
        return name in self.layers

    def __getitem__(self, name: str) -> LayerSnapshot:
        return self.layers[name]


_FIELDS = ("gamma", "bias_gamma", "p", "a", "s")


def snapshot_to_bytes(snap: PosteriorSnapshot) -> bytes:
    header = {
        "ablation": snap.ablation,
        "layers": [{"name": l.name, "n_in": l.n_in, "n_out": l.n_out, "activation": l.activation}
                   for l in snap.layers.values()],
    }
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for l in snap.layers.values():
        for f in _FIELDS:
            buf.write(np.ascontiguousarray(getattr(l, f), dtype="<f8").tobytes())
    return buf.getvalue()


def snapshot_from_bytes(raw: bytes) -> PosteriorSnapshot:
    if not raw.startswith(SNAPSHOT_MAGIC):
        raise FormatError("missing CLAW1 magic", 0)
    pos = len(SNAPSHOT_MAGIC)
    end = raw.find(b"\n", pos)
    if end < 0:
        raise FormatError("unterminated header", pos)
    try:
        header = json.loads(raw[pos:end])
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad header: {exc}", pos) from None
    pos = end + 1
    ablation = header.get("ablation", "none")
    layers = {}
    for spec in header["layers"]:
        n_in, n_out = spec["n_in"], spec["n_out"]
        arrays = {}
        for f in _FIELDS:
            shape = (n_in, n_out) if f == "gamma" else (n_out,)
            nbytes = 8 * int(np.prod(shape))
            if pos + nbytes > len(raw):
                raise FormatError(f"truncated array {spec['name']}.{f}", pos)
            arrays[f] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)
            pos += nbytes
        layer = AdaptiveVariationalLayer(n_in, n_out, spec["activation"], name=spec["name"])
        for f, v in arrays.items():
            getattr(layer, f).data[...] = v
        layers[spec["name"]] = LayerSnapshot.capture(layer, ablation)
    if pos != len(raw):
        raise FormatError("trailing bytes after last layer", pos)
    return PosteriorSnapshot(layers, ablation)


def save_snapshot(snap: PosteriorSnapshot, path: str | Path) -> None:
    Path(path).write_bytes(snapshot_to_bytes(snap))


def load_snapshot(path: str | Path) -> PosteriorSnapshot:
    return snapshot_from_bytes(Path(path).read_bytes())

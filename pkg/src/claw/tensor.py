"""A small define-by-run reverse-mode autodiff engine over float64 numpy arrays.

Every operation creates a new :class:`Tensor` node that remembers its parents
and a closure mapping the output gradient to parent gradients. Nodes receive a
strictly increasing creation index, so creation order is a valid topological
order and :func:`backward` simply walks the reachable nodes in reverse.

Broadcasting is limited to scalar-with-tensor and row-vector-with-matrix
(a ``(n,)`` operand against a ``(..., n)`` operand).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_counter = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "index")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward_fn: BackwardFn | None = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn = backward_fn
        self.op = op
        self.index = next(_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward_fn=fn if needs else None, op=op)


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape == b.shape or a.size == 1 and a.ndim <= 1 or b.size == 1 and b.ndim <= 1:
        return
    if a.ndim == 1 and b.ndim >= 2 and b.shape[-1] == a.shape[0]:
        return
    if b.ndim == 1 and a.ndim >= 2 and a.shape[-1] == b.shape[0]:
        return
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0 or int(np.prod(shape)) == 1:
        return np.asarray(grad.sum()).reshape(shape)
    # row vector against a matrix
    return grad.reshape(-1, shape[-1]).sum(axis=0).reshape(shape)


# --- binary elementwise ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    ad, bd = a.data, b.data
    out = ad / bd
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * out / bd, bd.shape)), "div")


# --- unary elementwise ----------------------------------------------------

def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid_np(a.data)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + exp(a)), evaluated without overflow."""
    a = as_tensor(a)
    return _node(np.logaddexp(0.0, a.data), (a,), lambda g: (g * _sigmoid_np(a.data),), "softplus")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(~(a.data > 0)):
        raise DomainError("log: input must be strictly positive")
    x = a.data
    return _node(np.log(x), (a,), lambda g: (g / x,), "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0) or np.any(np.isnan(a.data)):
        raise DomainError("sqrt: input must be non-negative")
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def clamp_min(a, lo: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= lo
    return _node(np.where(mask, a.data, lo), (a,), lambda g: (g * mask,), "clamp_min")


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _node(x * x, (a,), lambda g: (2.0 * g * x,), "square")


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div,
    "relu": relu, "sigmoid": sigmoid, "log": log, "exp": exp, "sqrt": sqrt, "neg": neg,
}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by name; binary kinds need ``b``, unary kinds reject it."""
    if kind not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise kind {kind!r}")
    if kind in ("add", "sub", "mul", "div"):
        if b is None:
            raise ContractError(f"{kind} needs two operands")
        return _ELEMENTWISE[kind](a, b)
    if b is not None:
        raise ContractError(f"{kind} takes a single operand")
    return _ELEMENTWISE[kind](a)


# --- reductions and linear algebra ----------------------------------------

def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(np.asarray(a.data.sum(axis=axis)), (a,), fn, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels, reduction: str = "mean") -> Tensor:
    """Cross-entropy of integer ``labels`` under ``softmax(logits)``.

    Uses max-subtraction for stability. ``reduction`` is ``"mean"`` (default)
    or ``"sum"`` over the batch.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy: logits must be 2-D, got {logits.shape}")
    n, k = logits.shape
    if n < 1 or labels.shape != (n,):
        raise DimensionError(f"softmax_cross_entropy: labels shape {labels.shape} vs batch {n}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ContractError("softmax_cross_entropy: labels must be integers")
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError(f"softmax_cross_entropy: label outside [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    per_example = logz - z[rows, labels]
    scale = 1.0 / n if reduction == "mean" else 1.0
    if reduction not in ("mean", "sum"):
        raise ContractError(f"unknown reduction {reduction!r}")

    def fn(g):
        p = np.exp(z - logz[:, None])
        p[rows, labels] -= 1.0
        return (g * scale * p,)

    return _node(np.asarray(per_example.sum() * scale), (logits,), fn, "softmax_xent")


# --- backward -------------------------------------------------------------

def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every ancestor needing it.

    Calling twice without clearing grads adds the second result onto the first.
    """
    if root.size != 1:
        raise ContractError(f"backward: root must be a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    nodes: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.index in nodes:
            continue
        nodes[t.index] = t
        stack.extend(p for p in t.parents if p.requires_grad)

    grads: dict[int, np.ndarray] = {root.index: np.ones_like(root.data)}
    for idx in sorted(nodes, reverse=True):
        t = nodes[idx]
        g = grads.get(idx)
        if g is None or t.backward_fn is None:
            continue
        for parent, pg in zip(t.parents, t.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
    for idx, t in nodes.items():
        g = grads.get(idx)
        if g is None:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g


# --- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64))


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[np.ndarray, AdamState]:
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise DimensionError(f"adam_step: shapes {param.shape}, {grad.shape}, {state.m.shape}")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), state


@dataclass
class Adam:
    """Adam over a list of leaf tensors, updating their ``data`` in place."""

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        self.states = [AdamState.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, st in zip(self.params, self.states):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data[...], _ = adam_step(p.data, g, st, self.lr, self.beta1, self.beta2, self.eps)

"""Reverse-mode differentiation over dense 2-D float64 arrays.

Every value is a :class:`Tensor` holding a 2-D ``numpy`` array. Operations on
tensors that require gradients remember their inputs and a closure computing
the vector-Jacobian product; :func:`backward` replays them in reverse creation
order. Sparse left operands (``scipy.sparse``) are supported in :func:`spmm`
and are always treated as constants.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

_counter = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._seq = next(_counter)
        self._gbuf: np.ndarray | None = None
        self.op = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data[0, 0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    @property
    def T(self) -> Tensor:
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._seq = next(_counter)
    out._gbuf = None
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass
class Tape:
    """Recorded operations reachable from a loss, in execution order."""

    entries: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_loss(cls, loss: Tensor) -> Tape:
        seen: set[int] = set()
        stack = [loss]
        found = []
        while stack:
            t = stack.pop()
            if id(t) in seen or t.is_leaf:
                continue
            seen.add(id(t))
            found.append(t)
            stack.extend(t._parents)
        found.sort(key=lambda t: t._seq)
        return cls(found)

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = Tape.from_loss(loss)
    if not tape:
        raise RuntimeError("backward() on an empty tape: loss has no recorded history")
    loss._gbuf = np.ones((1, 1))
    try:
        for node in reversed(tape.entries):
            g = node._gbuf
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.is_leaf:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
                elif parent._gbuf is None:
                    parent._gbuf = pg
                else:
                    parent._gbuf = parent._gbuf + pg
    finally:
        for node in tape.entries:
            node._gbuf = None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        ),
        "div",
    )


def square(x: Tensor) -> Tensor:
    return _result(x.data**2, (x,), lambda g: (2.0 * x.data * g,), "square")


def sqrt(x: Tensor) -> Tensor:
    """Defined for strictly positive inputs (the gradient is infinite at 0)."""
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (g / (2.0 * out),), "sqrt")


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        out = np.array([[x.data.sum()]])
    else:
        out = x.data.sum(axis=axis, keepdims=True)
    return _result(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    if n == 0:
        raise ValueError("mean of an empty tensor")
    if axis is None:
        out = np.array([[x.data.mean()]])
    else:
        out = x.data.mean(axis=axis, keepdims=True)
    return _result(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),), "mean")


def row_l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm of each row, shape (n, 1). Subgradient 0 at the origin."""
    norm = np.sqrt((x.data**2).sum(axis=1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)

    def bw(g):
        return (np.where(norm > 0, g * x.data / safe, 0.0),)

    return _result(norm, (x,), bw, "row_l2_norm")


def row_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _result(out, (x,), bw, "row_softmax")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy, computed from logits in log-sum-exp form."""
    y = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    if logits.data.size == 0:
        raise ValueError("bce_with_logits on an empty set")
    x = logits.data
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def bw(g):
        return ((expit(x) - y) * (g[0, 0] / n),)

    return _result(np.array([[per.mean()]]), (logits,), bw, "bce_with_logits")


# ---------------------------------------------------------------- structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def spmm(adj: sp.spmatrix, x: Tensor) -> Tensor:
    """Sparse (constant) times dense."""
    adj = sp.csr_matrix(adj)
    if adj.shape[1] != x.shape[0]:
        raise ValueError(f"spmm shape mismatch {adj.shape} @ {x.shape}")
    adj_t = adj.T.tocsr()
    return _result(np.asarray(adj @ x.data), (x,), lambda g: (np.asarray(adj_t @ g),), "spmm")


def transpose(x: Tensor) -> Tensor:
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = tuple(as_tensor(x) for x in xs)
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        if axis == 0:
            return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(xs)))
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return _result(np.concatenate([x.data for x in xs], axis=axis), xs, bw, "concat")


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows ``x[index]``; repeated indices accumulate in the backward pass."""
    idx = np.asarray(index, dtype=np.int64)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(x.data[idx], (x,), bw, "take_rows")


# ---------------------------------------------------------------- layers / optim


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    """Affine map ``x @ W + b``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        if in_dim <= 0 or out_dim <= 0:
            raise ValueError("Linear dimensions must be positive")
        self.weight = Tensor(glorot(rng, in_dim, out_dim), requires_grad=True)
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True) if bias else None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[1]}")
        out = matmul(x, self.weight)
        return out if self.bias is None else add(out, self.bias)


@dataclass
class AdamState:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One Adam update with coupled L2 weight decay; zeroes the gradients."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {i} {p!r} has no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad + state.weight_decay * p.data
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, weight_decay: float = 1e-5):
        self.params = list(params)
        self.state = AdamState(lr=lr, weight_decay=weight_decay)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

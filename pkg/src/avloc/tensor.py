"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation stamps its output with a monotonically increasing tape id
and a local-gradient closure over its inputs. Because an output is always
created after its inputs, replaying the records reachable from a loss in
decreasing tape-id order is a valid reverse topological order, and each
record is visited exactly once.

Gradients accumulate additively, both across fan-out within one backward
pass and across successive backward passes; they are cleared explicitly
(``Adam.step`` or ``zero_grad``). Broadcasting is deliberately restricted
to adding a trailing-dimension vector to a matrix, so shape mistakes fail
loudly instead of silently broadcasting.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_tape_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Skip tape recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 value array, optionally participating in the tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_tape_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._tape_id = next(_tape_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; everything routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    def log(self):
        return log(self)

    def sum(self, axis: int | None = None):
        return reduce_sum(self, axis)

    def mean(self, axis: int | None = None):
        return reduce_mean(self, axis)

    def max(self, axis: int):
        return reduce_max(self, axis)

    def softmax(self):
        return softmax(self)

    def transpose(self):
        return transpose(self)

    @property
    def T(self):
        return transpose(self)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._tape_id = next(_tape_counter)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires-grad tensor reachable from ``loss``.

    ``loss`` must be a scalar already produced on the tape (or a leaf).
    Gradients add onto any existing ``grad`` contents.
    """
    if loss.data.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    # reachable subgraph, iteratively (graphs run to ~1e5 nodes)
    seen = {id(loss): loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda t: t._tape_id, reverse=True)

    pending: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in order:
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = pending.get(id(parent))
            pending[id(parent)] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# elementwise and arithmetic operations


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> int | None:
    """Validate add/sub operand shapes; returns the broadcast axis or None.

    Equal shapes pass through; a matrix plus a trailing-dimension vector is
    the single permitted broadcast (bias addition).
    """
    if a.shape == b.shape:
        return None
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return 1
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    bc = _binary_shapes(a, b, "add")
    data = a.data + b.data

    def grad_fn(g):
        gb = g.sum(axis=0) if bc == 1 else g
        return g, gb

    return _result(data, (a, b), grad_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    bc = _binary_shapes(a, b, "sub")
    data = a.data - b.data

    def grad_fn(g):
        gb = g.sum(axis=0) if bc == 1 else g
        return g, -gb

    return _result(data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data * b.data
    return _result(data, (a, b), lambda g: (g * b.data, g * a.data))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first operand."""
    if a.shape != b.shape:
        raise DimensionError(f"maximum: incompatible shapes {a.shape} and {b.shape}")
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)
    return _result(data, (a, b), lambda g: (g * take_a, g * ~take_a))


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,))


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    return _result(out_data, (x,), lambda g: (g * (1.0 - out_data * out_data),))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    return _result(out_data, (x,), lambda g: (g * out_data * (1.0 - out_data),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)
    # subgradient 0 at exactly 0
    return _result(
        out_data,
        (x,),
        lambda g: (g * np.where(out_data > 0, 0.5 / np.where(out_data > 0, out_data, 1.0), 0.0),),
    )


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product contracting a's last axis with b's first."""
    if a.ndim == 0 or b.ndim == 0 or a.ndim > 2 or b.ndim > 2:
        raise DimensionError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    if a.ndim == 2 and b.ndim == 2:
        grad_fn = lambda g: (g @ b.data.T, a.data.T @ g)
    elif a.ndim == 2 and b.ndim == 1:
        grad_fn = lambda g: (np.outer(g, b.data), a.data.T @ g)
    elif a.ndim == 1 and b.ndim == 2:
        grad_fn = lambda g: (b.data @ g, np.outer(a.data, g))
    else:  # dot product
        grad_fn = lambda g: (g * b.data, g * a.data)
    return _result(np.asarray(data), (a, b), grad_fn)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"dot: expected vectors, got {a.shape} and {b.shape}")
    return matmul(a, b)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got {x.shape}")
    return _result(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


# ---------------------------------------------------------------------------
# reductions, softmax, concatenation, indexing


def _check_axis(x: Tensor, axis: int | None, op: str) -> None:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: axis {axis} out of range for shape {x.shape}")


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(x, axis, "sum")
    data = np.asarray(x.data.sum(axis=axis))
    if axis is None:
        grad_fn = lambda g: (np.broadcast_to(g, x.shape).copy(),)
    else:
        grad_fn = lambda g: (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)
    return _result(data, (x,), grad_fn)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(x, axis, "mean")
    data = np.asarray(x.data.mean(axis=axis))
    n = x.size if axis is None else x.shape[axis]
    if axis is None:
        grad_fn = lambda g: (np.broadcast_to(g / n, x.shape).copy(),)
    else:
        grad_fn = lambda g: (np.broadcast_to(np.expand_dims(g / n, axis), x.shape).copy(),)
    return _result(data, (x,), grad_fn)


def reduce_max(x: Tensor, axis: int) -> Tensor:
    """Max over one axis; gradient routes to the first maximal entry."""
    _check_axis(x, axis, "max")
    data = np.asarray(x.data.max(axis=axis))
    idx = np.argmax(x.data, axis=axis)

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (gx,)

    return _result(data, (x,), grad_fn)


def max_pool_spatial(x: Tensor) -> Tensor:
    """Max over the trailing region axis of a channels-by-regions map."""
    if x.ndim != 2:
        raise DimensionError(f"max_pool_spatial: expected a 2-d map, got {x.shape}")
    return reduce_max(x, axis=1)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a vector (max-subtracted before exponentiation)."""
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"softmax: expected a nonempty vector, got {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    return _result(s, (x,), lambda g: (s * (g - np.dot(g, s)),))


def logsumexp(x: Tensor) -> Tensor:
    """log(sum(exp(x))) of a vector, stably; gradient is softmax(x)."""
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"logsumexp: expected a nonempty vector, got {x.shape}")
    m = x.data.max()
    e = np.exp(x.data - m)
    total = e.sum()
    data = np.asarray(m + np.log(total))
    return _result(data, (x,), lambda g: (g * (e / total),))


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a vector as a scalar."""
    if x.ndim != 1:
        raise DimensionError(f"pick: expected a vector, got {x.shape}")
    if not 0 <= index < x.size:
        raise ContractError(f"pick: index {index} out of range for length {x.size}")

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _result(np.asarray(x.data[index]), (x,), grad_fn)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise DimensionError("concat: need at least one tensor")
    _check_axis(ts[0], axis, "concat")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]
    grad_fn = lambda g: tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis))
    return _result(data, tuple(ts), grad_fn)


def cross_entropy_with_logits(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], computed stably via logsumexp."""
    if not 0 <= label < logits.size:
        raise ContractError(f"label index {label} out of range for {logits.size} classes")
    return sub(logsumexp(logits), pick(logits, label))


# ---------------------------------------------------------------------------
# optimization


class Adam:
    """Adam with the original constants (beta1=0.9, beta2=0.999, eps=1e-8).

    ``step`` applies one bias-corrected update to every registered
    parameter and then clears their gradients.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"adam step: parameter {i} has no gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / c1
            v_hat = self._v[i] / c2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

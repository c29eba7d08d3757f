"""Dense float64 tensors with a define-by-run graph for reverse-mode autodiff.

Every primitive returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward`` walks the
graph once in reverse topological order.

Broadcasting is deliberately limited to scalar (shape ``()``) against tensor.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "tensor",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "matmul",
    "sum",
    "mean",
    "leaky_relu",
    "tanh",
    "softplus",
    "log",
    "sigmoid",
    "square",
    "sqrt",
    "concat",
    "dot",
    "norm",
    "linear_map",
    "backward",
    "PRIMITIVES",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class DomainError(ValueError):
    """Input outside the domain of a primitive (log/sqrt of non-positive values)."""


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 _parents: tuple = (), _backward: BackwardFn | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.op = op
        self._parents = _parents
        self._backward = _backward
        # leaves that want gradients start at zero so unreachable ones read as 0
        self.grad = np.zeros_like(self.data) if (requires_grad and not _parents) else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_nonscalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _raise_nonscalar(t: Tensor):
    raise ShapeError(f"item: tensor has shape {t.shape}, expected a single element")


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Make a leaf tensor (a private float64 copy of ``data``)."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, _parents=parents, _backward=fn)
    return Tensor(data, op=op)


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape} "
                     "(only scalar-vs-tensor broadcasting is supported)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum())


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _binary_shapes("add", a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _binary_shapes("sub", a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _binary_shapes("mul", a, b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), fn, "mul")


def div(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _binary_shapes("div", a, b)
    if np.any(b.data == 0.0):
        raise DomainError("div: division by zero")
    out = a.data / b.data

    def fn(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), fn, "div")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def fn(g):
        return (g * c,)

    return _node(a.data * c, (a,), fn, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def fn(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), fn, "matmul")


# ---------------------------------------------------------------- reductions

def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the primitive name
    a = constant(a)

    def fn(g):
        return (np.full(a.shape, float(g)),)

    return _node(np.asarray(a.data.sum()), (a,), fn, "sum")


def mean(a: Tensor) -> Tensor:
    a = constant(a)
    if a.size == 0:
        raise ShapeError("mean: empty tensor")
    n = a.size

    def fn(g):
        return (np.full(a.shape, float(g) / n),)

    return _node(np.asarray(a.data.sum() / n), (a,), fn, "mean")


# ---------------------------------------------------------------- elementwise

def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)

    def fn(g):
        return (np.where(pos, g, slope * g),)

    return _node(out, (a,), fn, "leaky_relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def fn(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), fn, "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(a: Tensor) -> Tensor:
    def fn(g):
        return (g * _sigmoid(a.data),)

    return _node(np.logaddexp(0.0, a.data), (a,), fn, "softplus")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def fn(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), fn, "sigmoid")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError(f"log: non-positive input (min {a.data.min()!r})")

    def fn(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), fn, "log")


def square(a: Tensor) -> Tensor:
    def fn(g):
        return (2.0 * g * a.data,)

    return _node(a.data * a.data, (a,), fn, "square")


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError(f"sqrt: non-positive input (min {a.data.min()!r})")
    out = np.sqrt(a.data)

    def fn(g):
        return (g * 0.5 / out,)

    return _node(out, (a,), fn, "sqrt")


# ---------------------------------------------------------------- vectors

def concat(parts: Iterable[Tensor]) -> Tensor:
    """Flatten each part and concatenate, in order, into one 1-D tensor."""
    parts = tuple(constant(p) for p in parts)
    if not parts:
        raise ShapeError("concat: no operands")
    sizes = [p.size for p in parts]
    offsets = np.cumsum([0] + sizes)

    def fn(g):
        return tuple(g[offsets[i]:offsets[i + 1]].reshape(p.shape) for i, p in enumerate(parts))

    return _node(np.concatenate([p.data.reshape(-1) for p in parts]), parts, fn, "concat")


def dot(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: expected equal-length vectors, got {a.shape} and {b.shape}")

    def fn(g):
        return g * b.data, g * a.data

    return _node(np.asarray(a.data @ b.data), (a, b), fn, "dot")


def norm(a: Tensor) -> Tensor:
    """Euclidean norm over all elements."""
    n = float(np.sqrt(np.sum(a.data * a.data)))
    if n == 0.0:
        raise DomainError("norm: zero vector has no gradient")

    def fn(g):
        return (g * a.data / n,)

    return _node(np.asarray(n), (a,), fn, "norm")


def linear_map(a: Tensor, forward: Callable[[np.ndarray], np.ndarray],
               adjoint: Callable[[np.ndarray], np.ndarray], name: str = "linear_map") -> Tensor:
    """Apply a fixed linear operator; its adjoint carries the gradient back."""
    out = np.asarray(forward(a.data), dtype=np.float64)

    def fn(g):
        return (np.asarray(adjoint(g), dtype=np.float64).reshape(a.shape),)

    return _node(out, (a,), fn, name)


PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "div": div, "scale": scale, "matmul": matmul,
    "sum": sum, "mean": mean, "leaky_relu": leaky_relu, "tanh": tanh,
    "softplus": softplus, "log": log, "sigmoid": sigmoid, "square": square,
    "sqrt": sqrt, "concat": concat, "dot": dot, "norm": norm,
    "linear_map": linear_map,
}


# ---------------------------------------------------------------- backward

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ShapeError(f"backward: loss must have exactly one element, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.array(pg, dtype=np.float64).reshape(parent.shape)

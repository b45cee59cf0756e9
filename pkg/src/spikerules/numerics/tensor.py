"""Dense float64 tensors with an explicit reverse-mode tape.

A :class:`Tensor` is an immutable numpy-backed value. Tensors produced from
operands that live on a :class:`Tape` are recorded on that tape; tensors with
no tape are plain constants. There is no global "current tape": the tape
travels with its tensors, so independent evaluations never interfere.

Broadcasting is restricted to scalar-tensor pairs. Anything else needs an
explicit :func:`expand`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class TapeError(RuntimeError):
    """Misuse of a tape (consumed, mixed tapes, non-scalar loss)."""


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "Tape | None" = None, node: int = -1, _fresh: bool = False):
        if _fresh:
            data = np.asarray(data, dtype=np.float64)
        else:
            data = np.array(data, dtype=np.float64)
            _check_finite(data, "Tensor")
        data.flags.writeable = False
        self.data = data
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        where = "" if self.tape is None else f", node={self.node}"
        return f"Tensor(shape={self.shape}{where})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of primitive operations for one differentiation.

    Usage::

        tape = Tape()
        w = tape.watch(w0, "w")
        loss = (w * x).sum()
        grads = tape.backward(loss)   # {"w": ...}; the tape is now consumed
    """

    def __init__(self):
        self._ops: list[tuple[int, tuple[int, ...], Backward]] = []
        self._shapes: list[tuple[int, ...]] = []
        self._watched: dict[str, int] = {}
        self._consumed = False

    def __len__(self):
        return len(self._ops)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def _new_node(self, shape) -> int:
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        self._shapes.append(shape)
        return len(self._shapes) - 1

    def watch(self, value, name: str) -> Tensor:
        """Register a tracked parameter and return its on-tape tensor."""
        if name in self._watched:
            raise TapeError(f"parameter {name!r} already watched")
        data = value.data if isinstance(value, Tensor) else np.array(value, dtype=np.float64)
        if isinstance(value, Tensor):
            data = data.copy()
        _check_finite(data, f"watch({name})")
        node = self._new_node(data.shape)
        self._watched[name] = node
        return Tensor(data, self, node, _fresh=True)

    def record(self, data: np.ndarray, inputs: Sequence[Tensor], backward: Backward, op: str) -> Tensor:
        _check_finite(data, op)
        node = self._new_node(data.shape)
        self._ops.append((node, tuple(t.node if t.tape is self else -1 for t in inputs), backward))
        return Tensor(data, self, node, _fresh=True)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Replay adjoints in reverse execution order; consumes the tape."""
        if self._consumed:
            raise TapeError("backward() on a consumed tape")
        if loss.tape is not self:
            if loss.tape is None and loss.size == 1:
                self._consumed = True
                return {name: np.zeros(self._shapes[n]) for name, n in self._watched.items()}
            raise TapeError("loss was not recorded on this tape")
        if loss.size != 1:
            raise TapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        adj: list[np.ndarray | None] = [None] * len(self._shapes)
        adj[loss.node] = np.ones(loss.shape)
        for out, ins, fn in reversed(self._ops):
            g = adj[out]
            if g is None:
                continue
            adj[out] = None
            for i, gi in zip(ins, fn(g)):
                if i < 0 or gi is None:
                    continue
                adj[i] = gi if adj[i] is None else adj[i] + gi
        grads = {}
        for name, n in self._watched.items():
            g = adj[n]
            grads[name] = np.zeros(self._shapes[n]) if g is None else np.array(g, dtype=np.float64)
        self._ops.clear()
        return grads


# ---------------------------------------------------------------------------
# primitive operations


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*ts: Tensor) -> "Tape | None":
    tape = None
    for t in ts:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise TapeError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _emit(data, inputs, backward, op) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        _check_finite(data, op)
        return Tensor(data, _fresh=True)
    return tape.record(data, inputs, backward, op)


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform "
                         "(only scalar broadcasting is implicit; use expand)")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b),
                 lambda g: (_reduce_to(g * bd, ad.shape), _reduce_to(g * ad, bd.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "div")
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd
    return _emit(out, (a, b),
                 lambda g: (_reduce_to(g / bd, ad.shape), _reduce_to(-g * ad / (bd * bd), bd.shape)),
                 "div")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    ad, bd = a.data, b.data
    return _emit(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _emit(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return _emit(out.copy(), (a,), lambda g: (g.reshape(src),), "reshape")


def expand(a, shape) -> Tensor:
    """Broadcast ``a`` to ``shape`` by numpy rules; gradients are summed back."""
    a = as_tensor(a)
    shape = tuple(shape)
    src = a.shape
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"expand: cannot expand {src} to {shape}") from None
    lead = len(shape) - len(src)

    def back(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(src) if n == 1 and g.shape[i] != 1)
        return (g.sum(axis=axes, keepdims=True) if axes else g,)

    return _emit(out, (a,), back, "expand")


def concat(ts: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    if not ts:
        raise ShapeError("concat: no operands")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat: shapes " + ", ".join(str(t.shape) for t in ts)
                         + f" do not conform along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _emit(out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def take(a, index) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)
    src = a.shape
    try:
        out = np.array(a.data[index], dtype=np.float64)
    except IndexError as exc:
        raise ShapeError(f"index {index!r} invalid for shape {src}: {exc}") from None

    def back(g):
        full = np.zeros(src)
        full[index] += g
        return (full,)

    return _emit(out, (a,), back, "take")


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    src = a.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, src).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return _emit(np.asarray(a.data.sum(axis=axis)), (a,), back, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), 1.0 / n)


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _emit(out, (a,), lambda g: (g / ad,), "log")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _emit(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _emit(p, (a,), back, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _emit(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def stop_gradient(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data, _fresh=True) if a.tape is not None else a


def stack(ts: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    if not ts:
        raise ShapeError("stack: no operands")
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ShapeError("stack: shapes " + ", ".join(str(s) for s in sorted(shapes)) + " differ")
    out = np.stack([t.data for t in ts], axis=axis)
    n = len(ts)
    return _emit(out, ts, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)), "stack")

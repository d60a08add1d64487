"""Dense float64 tensors with a reverse-mode gradient tape.

Every public operation computes its result eagerly with numpy. When a
:class:`Tape` is active (``with Tape() as tape:``) the operation is also
recorded together with a closure that maps the output gradient to the
input gradients; :func:`backward` replays those closures in reverse.

Outside a tape the same functions are plain numerics, which is how the
sampling loops run without paying for gradient bookkeeping.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NonFiniteError

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "no_grad",
    "backward",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "getitem",
    "stack",
    "concat",
    "sum",
    "mean",
    "square",
    "exp",
    "log",
    "sigmoid",
    "tanh",
    "softmax",
    "log_softmax",
    "log_sum_exp",
    "maximum",
    "clip",
]

_local = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """Immutable-by-convention dense array of finite float64 values."""

    __slots__ = ("values", "name")
    __array_priority__ = 100.0

    def __init__(self, values, name: str | None = None):
        arr = np.array(values, dtype=np.float64)
        _check_finite(arr, "Tensor")
        self.values = arr
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __len__(self) -> int:
        return len(self.values)

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{where} produced non-finite values")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive operations for one backward pass.

    A tape is single-owner. Nesting is allowed; operations are recorded on the
    innermost active tape of the current thread only.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], fn: BackwardFn) -> None:
        self._nodes.append((out, inputs, fn))


class no_grad:
    """Suspend recording on any enclosing tape."""

    def __enter__(self) -> None:
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(None)

    def __exit__(self, *exc) -> None:
        _local.stack.pop()


def _active_tape() -> Tape | None:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _emit(arr: np.ndarray, inputs: tuple[Tensor, ...], fn: BackwardFn, op: str) -> Tensor:
    _check_finite(arr, op)
    out = Tensor._wrap(arr)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, inputs, fn)
    return out


class Gradients:
    """Gradient map keyed by tensor identity.

    Tensors that never influenced the loss map to exact zeros.
    """

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        if g is None:
            return np.zeros_like(t.values)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse-mode pass over ``tape`` seeded with d(loss)/d(loss) = 1."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for out, inputs, fn in reversed(tape._nodes):
        g = grads.get(id(out))
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None:
                continue
            key = id(t)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    return Gradients(grads)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(
        a.values + b.values, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(
        a.values - b.values, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _emit(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    av, bv = a.values, b.values
    if np.any(bv == 0):
        raise DomainError("div: division by zero")
    out = av / bv
    return _emit(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.values, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.values
    return _emit(av * av, (a,), lambda g: (2.0 * av * g,), "square")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.values)
    return _emit(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.values
    if np.any(av <= 0):
        raise DomainError("log: argument must be strictly positive")
    return _emit(np.log(av), (a,), lambda g: (g / av,), "log")


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never sees a large positive argument
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    """Logistic function 1/(1+e^-x), stable for large |x|."""
    a = as_tensor(a)
    s = _sigmoid_values(a.values)
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.values)
    return _emit(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def maximum(a, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a >= floor."""
    a = as_tensor(a)
    keep = a.values >= floor
    return _emit(np.maximum(a.values, floor), (a,), lambda g: (g * keep,), "maximum")


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.values >= lo) & (a.values <= hi)
    return _emit(np.clip(a.values, lo, hi), (a,), lambda g: (g * inside,), "clip")


# -- linear algebra and shape -----------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product of a (m x k) and b (k x n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit(a.values.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {old} to {tuple(shape)}") from None
    return _emit(out, (a,), lambda g: (g.reshape(old),), "reshape")


def getitem(a, index) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)
    shape = a.shape

    def grad(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _emit(np.array(a.values[index]), (a,), grad, "getitem")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ContractError("stack: empty sequence")
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise DimensionError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.values for t in ts], axis=axis)
    n = len(ts)
    return _emit(
        out, ts, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)), "stack"
    )


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ContractError("concat: empty sequence")
    try:
        out = np.concatenate([t.values for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _emit(out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


# -- reductions -------------------------------------------------------------


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape

    def grad(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(np.asarray(a.values.sum(axis=axis)), (a,), grad, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def _lse_values(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def log_sum_exp(a, axis: int = -1) -> Tensor:
    """log(sum(exp(a))) along ``axis`` using the max-shift trick."""
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] < 1:
        raise ContractError("log_sum_exp: need at least one element along axis")
    x = a.values
    out = _lse_values(x, axis)

    def grad(g):
        w = np.exp(x - np.expand_dims(out, axis))
        return (np.expand_dims(g, axis) * w,)

    return _emit(out, (a,), grad, "log_sum_exp")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.values
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    s = e / np.sum(e, axis=axis, keepdims=True)

    def grad(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _emit(s, (a,), grad, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.values
    out = x - np.expand_dims(_lse_values(x, axis), axis)

    def grad(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return _emit(out, (a,), grad, "log_softmax")

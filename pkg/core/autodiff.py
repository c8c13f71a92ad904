"""Dense reverse-mode differentiation over 2-D float64 matrices.

Operations record themselves on the active :class:`Tape` whenever one of their
inputs requires a gradient. Outside a ``with Tape():`` block the same functions
only compute values, which is how evaluation-mode forwards run.
"""
import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """A dense 2-D matrix that can take part in a recorded computation."""

    __slots__ = ("values", "requires_grad", "grad", "tape_id", "name", "_tape")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(values, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(-1, 1)
        elif array.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got {array.ndim} dimensions")
        self.values = np.ascontiguousarray(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tape_id: Optional[int] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def detach(self) -> "Tensor":
        """Constant view of the current values; gradients stop here."""
        return Tensor(self.values, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        if np.isscalar(other):
            return affine(self, 1.0, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return affine(self, 1.0, -float(other))
        return sub(self, other)

    def __rsub__(self, other):
        if np.isscalar(other):
            return affine(self, -1.0, float(other))
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return affine(self, float(other), 0.0)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return affine(self, 1.0 / float(other), 0.0)
        return div(self, other)

    def __neg__(self):
        return affine(self, -1.0, 0.0)


@dataclass
class Record:
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule
    op: str


class Tape:
    """Ordered record of operations; backward replays it in exact reverse."""

    def __init__(self):
        self.records: List[Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, rule: BackwardRule) -> None:
        output.tape_id = len(self.records)
        output._tape = self
        self.records.append(Record(inputs=inputs, output=output, backward=rule, op=op))

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
        if not loss.requires_grad:
            return
        if loss._tape is not self or loss.tape_id is None:
            raise ShapeError("loss was not recorded on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        leaves: Dict[int, Tensor] = {}
        for rec in reversed(self.records[: loss.tape_id + 1]):
            upstream = grads.pop(id(rec.output), None)
            if upstream is None:
                continue
            _accumulate(rec.output, upstream)
            for tensor, grad in zip(rec.inputs, rec.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._tape is None:
                    leaves[id(tensor)] = tensor
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad
        for key, tensor in leaves.items():
            _accumulate(tensor, grads[key])


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad = tensor.grad + grad


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor requiring one that ``loss`` depends on."""
    if loss._tape is None:
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
        return
    loss._tape.backward(loss)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(op: str, values: np.ndarray, inputs: Tuple[Tensor, ...], rule: BackwardRule) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{op} produced non-finite values")
    needs_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape.get()
    out = Tensor(values, requires_grad=needs_grad and tape is not None)
    if out.requires_grad:
        tape.record(op, inputs, out, rule)
    return out


def _check_row_broadcast(op: str, a: Tensor, b: Tensor) -> bool:
    """True when b broadcasts as a row over a, False when shapes match."""
    if a.shape == b.shape:
        return False
    if b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        return True
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def _unbroadcast(grad: np.ndarray, broadcast: bool) -> np.ndarray:
    return grad.sum(axis=0, keepdims=True) if broadcast else grad


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    av, bv = a.values, b.values
    return _emit("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise sum; ``b`` may be a (1, cols) bias broadcast over rows."""
    a, b = as_tensor(a), as_tensor(b)
    bc = _check_row_broadcast("add", a, b)
    return _emit("add", a.values + b.values, (a, b), lambda g: (g, _unbroadcast(g, bc)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    bc = _check_row_broadcast("sub", a, b)
    return _emit("sub", a.values - b.values, (a, b), lambda g: (g, -_unbroadcast(g, bc)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    bc = _check_row_broadcast("mul", a, b)
    av, bv = a.values, b.values
    return _emit("mul", av * bv, (a, b), lambda g: (g * bv, _unbroadcast(g * av, bc)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    bc = _check_row_broadcast("div", a, b)
    av, bv = a.values, b.values
    return _emit(
        "div", av / bv, (a, b),
        lambda g: (g / bv, _unbroadcast(-g * av / (bv * bv), bc)),
    )


def affine(a: ArrayLike, scale: float, shift: float) -> Tensor:
    """``scale * a + shift`` with python scalars."""
    a = as_tensor(a)
    return _emit("affine", scale * a.values + shift, (a,), lambda g: (g * scale,))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    active = a.values > 0
    return _emit("relu", np.where(active, a.values, 0.0), (a,), lambda g: (g * active,))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = expit(a.values)
    return _emit("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def log(a: ArrayLike) -> Tensor:
    """Natural log with inputs clamped to at least ``LOG_FLOOR``."""
    a = as_tensor(a)
    clamped = np.maximum(a.values, LOG_FLOOR)
    inside = a.values >= LOG_FLOOR
    return _emit("log", np.log(clamped), (a,), lambda g: (np.where(inside, g / clamped, 0.0),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.values)
    return _emit("exp", y, (a,), lambda g: (g * y,))


def row_softmax(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = softmax(a.values, axis=1)
    return _emit(
        "row_softmax", y, (a,),
        lambda g: (y * (g - np.sum(g * y, axis=1, keepdims=True)),),
    )


def sum(a: ArrayLike) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    return _emit("sum", np.array([[a.values.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    size = a.values.size
    if size == 0:
        raise ShapeError("mean of an empty tensor")
    return _emit(
        "mean", np.array([[a.values.sum() / size]]), (a,),
        lambda g: (np.full(shape, g[0, 0] / size),),
    )


def concat_rows(parts: Sequence[ArrayLike]) -> Tensor:
    tensors = tuple(as_tensor(p) for p in parts)
    if not tensors:
        raise ShapeError("concat_rows needs at least one tensor")
    cols = tensors[0].shape[1]
    if any(t.shape[1] != cols for t in tensors):
        raise ShapeError("concat_rows: column counts differ")
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])
    return _emit(
        "concat_rows", np.vstack([t.values for t in tensors]), tensors,
        lambda g: tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors))),
    )


def select_rows(a: ArrayLike, mask) -> Tensor:
    """Rows of ``a`` where the boolean ``mask`` is set, in order."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (a.shape[0],):
        raise ShapeError(f"select_rows: mask of length {mask.shape} for {a.shape[0]} rows")
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        full[mask] = g
        return (full,)

    return _emit("select_rows", a.values[mask], (a,), rule)


def dropout(a: ArrayLike, rate: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1 - rate) at train time."""
    a = as_tensor(a)
    if not train or rate <= 0.0:
        return a
    if rate >= 1.0:
        raise ShapeError("dropout rate must be below 1")
    if rng is None:
        raise ValueError("dropout at train time needs a generator")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _emit("dropout", a.values * keep, (a,), lambda g: (g * keep,))


def check_gradient(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative error between backward and central finite differences.

    ``fn`` must rebuild the scalar loss from the current values of ``tensors``
    on every call and be deterministic.
    """
    for t in tensors:
        t.zero_grad()
    with Tape():
        loss = fn()
        backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros(t.shape) for t in tensors]

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        numeric = np.zeros(t.shape)
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = fn().item()
            flat[i] = original - eps
            minus = fn().item()
            flat[i] = original
            numeric.reshape(-1)[i] = (plus - minus) / (2 * eps)
        scale = max(np.linalg.norm(grad), np.linalg.norm(numeric), 1e-8)
        worst = max(worst, float(np.linalg.norm(grad - numeric) / scale))
    return worst

"""Dense tensors with reverse-mode differentiation on a linear tape.

A :class:`Tape` records every differentiable operation executed while it is
active (``with Tape() as tape: ...``). Calling ``tape.backward(root)`` on a
scalar output replays the records in reverse and accumulates ``d root / d
leaf`` into the ``grad`` of every leaf tensor created with
``requires_grad=True``. Gradients of intermediate results are kept only for
the duration of the sweep; leaf gradients add up across sweeps until
``zero_grad`` is called, which is what a training step expects.

Tapes are thread-confined: the active-tape stack is thread-local, so
independent tapes may run on separate threads without sharing state.

Precision follows the data: float32 is the training default, float64 is used
by the finite-difference verification suites. Operations never mutate their
inputs.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, DimensionError

_state = threading.local()


def _tape_stack():
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape():
    """The innermost active Tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """n-dimensional real array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division is supported by constants only")
        return mul(self, _wrap(1.0 / other, self.dtype))


def _wrap(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class Tape:
    """Ordered record of operations for one reverse sweep."""

    def __init__(self):
        self._entries = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise ContractError("tape context exited out of order")
        return False

    def __len__(self):
        return len(self._entries)

    def _record(self, out, inputs, backward):
        self._entries.append((out, inputs, backward))

    def backward(self, root):
        """Accumulate d(root)/d(leaf) into every requires_grad leaf."""
        if not isinstance(root, Tensor) or root.data.size != 1:
            shape = getattr(root, "shape", None)
            raise ContractError(f"backward root must be a scalar tensor, got shape {shape}")
        pending = {id(root): np.ones_like(root.data)}
        for out, inputs, backward in reversed(self._entries):
            gout = pending.pop(id(out), None)
            if gout is None:
                continue
            for tensor, grad in zip(inputs, backward(gout)):
                if grad is None or not tensor.requires_grad:
                    continue
                grad = np.asarray(grad, dtype=tensor.data.dtype)
                if tensor.is_leaf:
                    if tensor.grad is None:
                        tensor.grad = np.zeros_like(tensor.data)
                    tensor.grad += grad
                else:
                    acc = pending.get(id(tensor))
                    if acc is None:
                        pending[id(tensor)] = grad.copy()
                    else:
                        acc += grad


def from_op(data, inputs, backward):
    """Create the output of a differentiable op and record it if needed.

    ``backward(grad_out)`` must return one gradient array (or None) per
    entry of ``inputs``, already reduced to each input's shape.
    """
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        out.is_leaf = False
        tape._record(out, tuple(inputs), backward)
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b):
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return from_op(a.data + b.data, (a, b), backward)


def sub(a, b):
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return from_op(a.data - b.data, (a, b), backward)


def mul(a, b):
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return from_op(a.data * b.data, (a, b), backward)


def neg(a):
    return from_op(-a.data, (a,), lambda g: (-g,))


def sigmoid(a):
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return from_op(out_data, (a,), backward)


def tanh(a):
    out_data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return from_op(out_data, (a,), backward)


def absolute(a):
    """|a| with subgradient 0 at 0 (np.sign(0) == 0)."""
    sign = np.sign(a.data)
    return from_op(np.abs(a.data), (a,), lambda g: (g * sign,))


def ew_op(kind, a, b=None):
    """Dispatch on an elementwise op name: add, mul, sigmoid, tanh."""
    binary = {"add": add, "mul": mul}
    unary = {"sigmoid": sigmoid, "tanh": tanh}
    if kind in binary:
        if b is None:
            raise ContractError(f"ew_op '{kind}' needs two operands")
        return binary[kind](a, b)
    if kind in unary:
        if b is not None:
            raise ContractError(f"ew_op '{kind}' takes one operand")
        return unary[kind](a)
    raise ContractError(f"unknown ew_op kind '{kind}'")


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return from_op(a.data @ b.data, (a, b), backward)


def tsum(a):
    """Sum of all elements, as a scalar tensor."""
    def backward(g):
        return (np.full_like(a.data, g.reshape(())),)

    return from_op(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), backward)


def tmean(a):
    n = a.data.size

    def backward(g):
        return (np.full_like(a.data, g.reshape(()) / n),)

    return from_op(np.asarray(a.data.mean(), dtype=a.data.dtype), (a,), backward)


def concat(tensors, axis):
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise DimensionError(
                f"concat: off-axis extents differ, {tuple(base)} vs {tuple(other)} on axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def narrow(a, axis, start, length):
    """Contiguous slice of `length` extents along `axis`."""
    if not (0 <= start and start + length <= a.shape[axis]):
        raise DimensionError(
            f"narrow: [{start}, {start + length}) outside extent {a.shape[axis]} of axis {axis}"
        )
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return from_op(a.data[index].copy(), (a,), backward)


def reshape(a, shape):
    shape = tuple(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return from_op(a.data.reshape(shape), (a,), backward)

"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Only the operator set needed by the disparity network is provided; this is
not a general-purpose autodiff engine. Ops record onto the currently active
:class:`GradTape` (entered as a context manager) whenever any input requires
gradients. Without an active tape, ops are plain numpy forward computations.

Tensors produced by ops are treated as immutable. Leaf tensors (parameters)
may be updated in place by the optimizer between tape lifetimes.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError, NumericFailure

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Enable NaN/Inf detection on every tensor created by an op."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


_ACTIVE_TAPE = None


class _TapeNode:
    __slots__ = ("out", "inputs", "backward_fn", "tape")

    def __init__(self, out, inputs, backward_fn, tape):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.tape = tape


class GradTape:
    """Ordered record of operations for one reverse pass.

    Usage::

        with GradTape() as tape:
            loss = ...            # ops involving requires_grad tensors
        tape.backward(loss)       # or loss.backward()

    The tape is single-use: ``backward`` consumes it.
    """

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise InvalidStateError("another GradTape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _record(self, out, inputs, backward_fn):
        if self._consumed:
            raise InvalidStateError("tape has already been consumed by backward()")
        node = _TapeNode(out, inputs, backward_fn, self)
        out.tape_node = node
        self._nodes.append(node)

    def backward(self, loss: "Tensor") -> None:
        """Propagate d(loss)/d(tensor) to every requires_grad leaf on the tape."""
        if self._consumed:
            raise InvalidStateError("tape has already been consumed by backward()")
        if loss.data.size != 1:
            raise InvalidArgumentError(
                f"backward() needs a scalar loss, got shape {loss.shape}"
            )
        grads = {id(loss): np.ones_like(loss.data)}
        # Leaves: requires_grad inputs never produced by a node on this tape.
        produced = {id(n.out) for n in self._nodes}
        leaves = {}
        for node in self._nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced:
                    leaves[id(t)] = t
        for node in reversed(self._nodes):
            g_out = grads.pop(id(node.out), None)
            if g_out is None:
                continue
            in_grads = node.backward_fn(g_out)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = g if acc is None else acc + g
                if id(t) not in produced:
                    t.grad = grads[id(t)]
        for t in leaves.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        self._nodes.clear()
        self._consumed = True


class no_grad:
    """Context that suppresses tape recording (used by inference)."""

    def __enter__(self):
        global _ACTIVE_TAPE
        self._saved = _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._saved
        return False


class Tensor:
    """N-dimensional float64 array, optionally tracked by the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "tape_node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.tape_node = None
        if _DEBUG_CHECKS and not np.all(np.isfinite(self.data)):
            raise NumericFailure("tensor holds non-finite values")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def backward(self) -> None:
        if self.tape_node is None:
            raise InvalidStateError("tensor was not produced under an active tape")
        self.tape_node.tape.backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise InvalidArgumentError("division is supported by scalars only")
        return mul(self, 1.0 / float(other))

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    def abs(self):
        return tensor_abs(self)

    def reshape(self, *shape):
        return reshape(self, *shape)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def apply_op(inputs, out_data, backward_fn) -> Tensor:
    """Wrap ``out_data`` in a Tensor, recording on the active tape if needed."""
    out = Tensor(out_data)
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE_TAPE._record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply_op(
        (a, b),
        a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply_op(
        (a, b),
        a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply_op(
        (a, b),
        a.data * b.data,
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def tensor_sum(t: Tensor) -> Tensor:
    return apply_op((t,), t.data.sum(), lambda g: (np.broadcast_to(g, t.shape).copy(),))


def tensor_mean(t: Tensor) -> Tensor:
    n = t.size
    return apply_op(
        (t,), t.data.mean(), lambda g: (np.broadcast_to(g / n, t.shape).copy(),)
    )


def tensor_abs(t: Tensor) -> Tensor:
    return apply_op((t,), np.abs(t.data), lambda g: (g * np.sign(t.data),))


def reshape(t: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = t.shape
    return apply_op((t,), t.data.reshape(shape), lambda g: (g.reshape(old),))


def getitem(t: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(t.data)
        full[key] = g
        return (full,)

    return apply_op((t,), t.data[key].copy(), backward)


def sigmoid(t: Tensor) -> Tensor:
    # Branch on sign so exp() never overflows.
    x = t.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return apply_op((t,), y, lambda g: (g * y * (1.0 - y),))


def leaky_relu(t: Tensor, slope: float = 0.1) -> Tensor:
    mask = t.data > 0
    out = np.where(mask, t.data, slope * t.data)
    return apply_op((t,), out, lambda g: (g * np.where(mask, 1.0, slope),))


def concat(tensors, axis: int) -> Tensor:
    """Concatenate along ``axis``; all other extents must agree."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidArgumentError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            i != axis and t.shape[i] != ref[i] for i in range(len(ref))
        ):
            raise InvalidArgumentError(
                f"concat shape mismatch: {t.shape} vs {ref} on axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return apply_op(
        tuple(tensors), np.concatenate([t.data for t in tensors], axis=axis), backward
    )

"""Minimal reverse-mode autodiff on numpy arrays.

A Tensor wraps an ndarray; operations executed inside a ``with Tape():`` block
record backward closures on that tape. ``Tape.backward(loss)`` replays the
closures in reverse append order, which is a valid topological order because
every node is appended after its inputs. Gradients accumulate additively on
``.grad``; only leaves created with ``requires_grad=True`` keep them
meaningfully, but interior nodes hold transient grads during the sweep.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, GraphError


_DEFAULT_DTYPE = np.float32
_ACTIVE_TAPE = None


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(_DEFAULT_DTYPE, copy=False)


class Tensor:
    """An ndarray with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_tape", "_tracked")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        if self.data.size == 0:
            raise DimensionError(
                f"tensor shape {self.data.shape} has a zero extent; all extents must be >= 1"
            )
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._tracked = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A view of the same data with no tape affiliation; never accumulates grad."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    # arithmetic sugar; scalars are treated as constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes) -> "Tensor":
        return transpose(self, axes)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def abs(self) -> "Tensor":
        return absolute(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


class Tape:
    """Append-only op record; context manager that activates recording."""

    def __init__(self):
        self._nodes = []
        self._consumed = False
        self._prev = None

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss) = 1 and sweep the tape once, newest node first."""
        if self._consumed:
            raise GraphError("tape already consumed; rerun the forward pass before backward")
        if loss._tape is not self:
            raise GraphError("loss tensor is detached from this tape")
        if loss.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            node()
        self._nodes = []


def active_tape():
    return _ACTIVE_TAPE


def backward(loss: Tensor):
    """Run the backward sweep of the tape that recorded ``loss``."""
    if loss._tape is None:
        raise GraphError("loss tensor is detached from any tape")
    loss._tape.backward(loss)


def _tracks(t) -> bool:
    return isinstance(t, Tensor) and (t.requires_grad or t._tracked)


def record(out: Tensor, inputs, backward_fn) -> Tensor:
    """Attach ``out`` to the active tape if any input participates in the graph."""
    tape = _ACTIVE_TAPE
    if tape is None or tape._consumed:
        return out
    if not any(_tracks(t) for t in inputs):
        return out
    out._tracked = True
    out._tape = tape
    tape._nodes.append(backward_fn)
    return out


def accumulate(t: Tensor, g: np.ndarray):
    """Add ``g`` into ``t.grad`` unless ``t`` is a constant outside the graph."""
    if not _tracks(t):
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ; "
                             "broadcasting is limited to exact shape or scalar")


def _binary_parts(a, b, op):
    """Normalize (tensor, tensor|scalar) operands; scalars stay plain floats."""
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        if a.data.size != 1 and b.data.size != 1:
            _check_same_shape(a, b, op)
    return a, b


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce grad ``g`` back to a size-1 operand's shape."""
    if g.shape == tuple(shape):
        return g
    return np.asarray(np.sum(g)).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _binary_parts(a, b, "add")
    if isinstance(b, Tensor):
        out = Tensor(a.data + b.data, dtype=np.result_type(a.data, b.data))

        def bw():
            g = out.grad
            if g is None:
                return
            accumulate(a, g if a.shape == g.shape else _unbroadcast(g, a.shape))
            accumulate(b, g if b.shape == g.shape else _unbroadcast(g, b.shape))

        return record(out, (a, b), bw)
    out = Tensor(a.data + b, dtype=a.data.dtype)

    def bw_const():
        if out.grad is not None:
            accumulate(a, out.grad)

    return record(out, (a,), bw_const)


def sub(a, b) -> Tensor:
    if isinstance(b, Tensor):
        return add(a, neg(b))
    return add(a, -b)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, -out.grad)

    return record(out, (a,), bw)


def mul(a, b) -> Tensor:
    a, b = _binary_parts(a, b, "mul")
    if isinstance(b, Tensor):
        out = Tensor(a.data * b.data, dtype=np.result_type(a.data, b.data))

        def bw():
            g = out.grad
            if g is None:
                return
            ga = g * b.data
            gb = g * a.data
            accumulate(a, ga if a.shape == ga.shape else _unbroadcast(ga, a.shape))
            accumulate(b, gb if b.shape == gb.shape else _unbroadcast(gb, b.shape))

        return record(out, (a, b), bw)
    out = Tensor(a.data * b, dtype=a.data.dtype)

    def bw_const():
        if out.grad is not None:
            accumulate(a, out.grad * b)

    return record(out, (a,), bw_const)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first operand."""
    _check_same_shape(a, b, "maximum")
    out = Tensor(np.maximum(a.data, b.data), dtype=np.result_type(a.data, b.data))

    def bw():
        g = out.grad
        if g is None:
            return
        take_a = a.data >= b.data
        accumulate(a, g * take_a)
        accumulate(b, g * ~take_a)

    return record(out, (a, b), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty tensor list")
    nd = tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != nd:
            raise DimensionError(f"concat: rank mismatch {t.ndim} vs {nd}")
        for ax in range(nd):
            if ax != axis % nd and t.shape[ax] != tensors[0].shape[ax]:
                raise DimensionError(
                    f"concat: axis {ax} extent {t.shape[ax]} != {tensors[0].shape[ax]}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis % nd] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw():
        g = out.grad
        if g is None:
            return
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            accumulate(t, piece)

    return record(out, tuple(tensors), bw)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise DimensionError(f"reshape: {a.shape} has {a.size} elements, target {shape} does not")
    out = Tensor(a.data.reshape(shape), dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, out.grad.reshape(a.shape))

    return record(out, (a,), bw)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: axes {axes} are not a permutation of rank {a.ndim}")
    inv = np.argsort(axes)
    out = Tensor(np.transpose(a.data, axes), dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, np.transpose(out.grad, inv))

    return record(out, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data), dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, np.broadcast_to(out.grad, a.shape).astype(a.data.dtype, copy=False))

    return record(out, (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = Tensor(np.mean(a.data), dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            g = out.grad / n
            accumulate(a, np.broadcast_to(g, a.shape).astype(a.data.dtype, copy=False))

    return record(out, (a,), bw)


def absolute(a: Tensor) -> Tensor:
    """|x|; subgradient 0 at x = 0."""
    out = Tensor(np.abs(a.data), dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, out.grad * np.sign(a.data))

    return record(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s, dtype=x.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, out.grad * s * (1.0 - s))

    return record(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t, dtype=a.data.dtype)

    def bw():
        if out.grad is not None:
            accumulate(a, out.grad * (1.0 - t * t))

    return record(out, (a,), bw)


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """PReLU with one learnable slope per channel (axis 1 of ``a``)."""
    if a.ndim < 2:
        raise DimensionError(f"prelu expects a channel axis, got rank {a.ndim}")
    c = a.shape[1]
    if slope.shape != (c,):
        raise DimensionError(
            f"prelu: slope shape {slope.shape} does not match channel axis 1 extent {c}")
    shape = (1, c) + (1,) * (a.ndim - 2)
    sl = slope.data.reshape(shape)
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, sl * a.data), dtype=np.result_type(a.data, slope.data))

    def bw():
        g = out.grad
        if g is None:
            return
        accumulate(a, np.where(pos, g, g * sl).astype(a.data.dtype, copy=False))
        neg_x = np.where(pos, 0.0, a.data)
        axes = (0,) + tuple(range(2, a.ndim))
        accumulate(slope, np.sum(g * neg_x, axis=axes))

    return record(out, (a, slope), bw)

"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation that touches a tensor with ``requires_grad``
records itself on an implicit tape: the output remembers its parents, a
backward rule, and a monotonically increasing sequence number.  Because a
node is always recorded after its inputs, replaying the reachable nodes in
descending sequence order is exactly the reverse recording order.
"""

from __future__ import annotations

import contextlib
import itertools
import math

import numpy as np
from scipy.special import expit

_seq = itertools.count()
_default_dtype = np.dtype(np.float32)
_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


def get_default_dtype():
    return _default_dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for tensors built from non-float data."""
    global _default_dtype
    prev = _default_dtype
    _default_dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _default_dtype = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference, finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-dimensional float array that can take part in a gradient tape.

    ``grad`` is populated by :meth:`backward` on every tensor with
    ``requires_grad`` that the loss depends on.  Gradients accumulate across
    repeated ``backward`` calls until :meth:`zero_grad` is used.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_seq", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype.kind == "f":
            arr = data
        elif isinstance(data, np.floating):
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=_default_dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._seq = next(_seq)
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # -- autodiff --------------------------------------------------------
    def backward(self, grad=None):
        """Propagate d(self)/d(x) into ``x.grad`` for every reachable ``x``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape)
        if not self.requires_grad:
            return

        nodes = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in nodes:
                continue
            nodes[id(node)] = node
            stack.extend(p for p in node._parents if p.requires_grad)
        order = sorted(nodes.values(), key=lambda t: t._seq, reverse=True)

        pending = {id(self): grad}
        for node in order:
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.data.dtype)
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self), self)

    def __neg__(self):
        return _record(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("only scalar exponents are supported")
        x = self.data
        return _record(x**p, (self,), lambda g: (g * p * x ** (p - 1),))

    def __getitem__(self, idx):
        x = self.data

        def backward(g):
            out = np.zeros_like(x)
            np.add.at(out, idx, g)
            return (out,)

        return _record(x[idx], (self,), backward)

    # -- shape & reductions ---------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return _record(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def sum(self, axis=None, keepdims=False):
        x = self.data

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape),)

        return _record(np.asarray(x.sum(axis=axis, keepdims=keepdims)), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        x = self.data
        n = x.size if axis is None else math.prod(x.shape[a] for a in np.atleast_1d(axis))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def amax(self, axis, keepdims=False):
        """Maximum along one axis; ties send the gradient to the first index."""
        x = self.data
        idx = np.expand_dims(np.argmax(x, axis=axis), axis)
        out = np.take_along_axis(x, idx, axis=axis)

        def backward(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            grad = np.zeros_like(x)
            np.put_along_axis(grad, idx, g, axis=axis)
            return (grad,)

        return _record(out if keepdims else np.squeeze(out, axis), (self,), backward)


def _lift(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _record(data, parents, backward):
    """Wrap an op result, attaching it to the tape when gradients are needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


# -- elementwise ops -------------------------------------------------------
def add(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else a), _lift(b, a)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else a), _lift(b, a)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else a), _lift(b, a)
    x, y = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * y, x.shape) if a.requires_grad else None
        gb = _unbroadcast(g * x, y.shape) if b.requires_grad else None
        return ga, gb

    return _record(x * y, (a, b), backward)


def div(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else a), _lift(b, a)
    x, y = a.data, b.data
    out = x / y

    def backward(g):
        ga = _unbroadcast(g / y, x.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / y, y.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), backward)


def exp(x):
    out = np.exp(x.data)
    return _record(out, (x,), lambda g: (g * out,))


def log(x):
    d = x.data
    return _record(np.log(d), (x,), lambda g: (g / d,))


def sqrt(x):
    out = np.sqrt(x.data)
    return _record(out, (x,), lambda g: (g * 0.5 / out,))


def abs(x):  # noqa: A001 - mirrors numpy naming
    d = x.data
    return _record(np.abs(d), (x,), lambda g: (g * np.sign(d),))


def clamp_min(x, floor):
    """``max(x, floor)`` with zero gradient where the floor is active."""
    d = x.data
    keep = d > floor
    return _record(np.where(keep, d, np.asarray(floor, dtype=d.dtype)), (x,), lambda g: (g * keep,))


def relu(x):
    d = x.data
    keep = d > 0
    return _record(d * keep, (x,), lambda g: (g * keep,))


def sigmoid(x):
    out = expit(x.data)
    return _record(out, (x,), lambda g: (g * out * (1.0 - out),))

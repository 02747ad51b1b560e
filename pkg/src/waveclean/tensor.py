"""Dense-tensor library with tape-based reverse-mode autodiff.

Values are numpy arrays (float32 in production, float64 for gradient
checking). Each op records its parents and a backward closure; calling
``backward()`` on a scalar loss walks the tape once in reverse topological
order and accumulates gradients into every reachable ``requires_grad`` leaf.
The graph references are dropped afterwards so a fresh tape is built per step.
"""
from __future__ import annotations

import threading

import numpy as np

_STATE = threading.local()  # grad recording is per-thread: inference threads
_FINITE_CHECKS = True       # may run concurrently with a training thread


def _grad_enabled() -> bool:
    return getattr(_STATE, "grad_enabled", True)


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


class no_grad:
    """Context manager: ops inside do not record backward closures."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _STATE.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.grad_enabled = self._prev
        return False


def set_finite_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf guard applied to every op output."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def _check_finite(data):
    # min/max propagate NaN and catch +-Inf without a temporary bool array.
    if _FINITE_CHECKS and data.size and not (
        np.isfinite(data.max()) and np.isfinite(data.min())
    ):
        raise NonFiniteError("op produced non-finite values")


def _unbroadcast(grad, shape):
    # Sum grad down to `shape` after numpy broadcasting.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

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

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    # -- tape machinery ------------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward):
        _check_finite(data)
        req = _grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = req
        out._parents = tuple(p for p in parents if p.requires_grad) if req else ()
        out._backward = backward if req else None
        return out

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
            # free the tape; leaves keep their accumulated .grad
            node._parents = ()
            node._backward = None

    # -- elementwise arithmetic ----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._from_op(a.data + b.data, (a, b), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._from_op(a.data - b.data, (a, b), bwd)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        a = self

        def bwd(g):
            a._accumulate(-g)

        return Tensor._from_op(-a.data, (a,), bwd)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._from_op(a.data * b.data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._from_op(a.data / b.data, (a, b), bwd)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        a = self

        def bwd(g):
            a._accumulate(g * exponent * a.data ** (exponent - 1))

        return Tensor._from_op(a.data**exponent, (a,), bwd)

    # -- elementwise functions -----------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bwd(g):
            a._accumulate(g * out_data)

        return Tensor._from_op(out_data, (a,), bwd)

    def log(self):
        a = self

        def bwd(g):
            a._accumulate(g / a.data)

        return Tensor._from_op(np.log(a.data), (a,), bwd)

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def bwd(g):
            a._accumulate(g / (2.0 * out_data))

        return Tensor._from_op(out_data, (a,), bwd)

    def abs(self):
        a = self

        def bwd(g):
            a._accumulate(g * np.sign(a.data))

        return Tensor._from_op(np.abs(a.data), (a,), bwd)

    def clamp_min(self, floor: float):
        # Gradient is zero where the value was clamped.
        a = self
        mask = a.data > floor

        def bwd(g):
            a._accumulate(g * mask)

        return Tensor._from_op(np.maximum(a.data, floor), (a,), bwd)

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def bwd(g):
            a._accumulate(g * (1.0 - out_data * out_data))

        return Tensor._from_op(out_data, (a,), bwd)

    def sigmoid(self):
        a = self
        out_data = _sigmoid(a.data)

        def bwd(g):
            a._accumulate(g * out_data * (1.0 - out_data))

        return Tensor._from_op(out_data, (a,), bwd)

    def relu(self):
        a = self
        mask = a.data > 0

        def bwd(g):
            a._accumulate(g * mask)

        return Tensor._from_op(a.data * mask, (a,), bwd)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old_shape = a.shape

        def bwd(g):
            a._accumulate(g.reshape(old_shape))

        return Tensor._from_op(a.data.reshape(shape), (a,), bwd)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inverse = np.argsort(axes)

        def bwd(g):
            a._accumulate(g.transpose(inverse))

        return Tensor._from_op(a.data.transpose(axes), (a,), bwd)

    def __getitem__(self, idx):
        a = self

        def bwd(g):
            buf = np.zeros_like(a.data)
            buf[idx] = g
            a._accumulate(buf)

        return Tensor._from_op(a.data[idx], (a,), bwd)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def bwd(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.shape).copy())

        return Tensor._from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def matmul(self, other):
        a, b = self, self._coerce(other)

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

        return Tensor._from_op(a.data @ b.data, (a, b), bwd)

    __matmul__ = matmul


def _sigmoid(x):
    # Numerically stable logistic.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors, axis=0):
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tuple(tensors), bwd)


def backward(loss: Tensor) -> None:
    """Populate grads of every requires_grad leaf reachable from `loss`."""
    loss.backward()

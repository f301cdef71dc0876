"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Only the operations the models in this package need are implemented: broadcast
arithmetic, matmul (with shared leading batch dims), reductions, reshapes,
concatenation, row gather, tanh/exp/log, axis softmax, and a same-padded 1-D
convolution. Gradients accumulate into ``Tensor.grad`` as plain ndarrays.

A process-global flop meter counts multiply-adds of the matmul/affine/conv
contractions executed while a ``flop_meter()`` context is active; softmax,
bias adds, and activations are not counted.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True
_flop_stack: list[dict] = []


@contextmanager
def no_grad():
    """Disable graph construction inside the context."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def flop_meter():
    """Count matmul/conv multiply-adds executed inside the context.

    Yields a dict whose ``"madds"`` entry is updated in place.
    """
    counter = {"madds": 0}
    _flop_stack.append(counter)
    try:
        yield counter
    finally:
        _flop_stack.pop()


def _count_madds(n: int) -> None:
    for counter in _flop_stack:
        counter["madds"] += int(n)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_array(value) -> np.ndarray:
    if isinstance(value, np.ndarray) and value.dtype == np.float64:
        return value
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Node of the computation graph; wraps a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # Make `ndarray <op> Tensor` defer to the reflected Tensor operators
    # instead of numpy broadcasting over the object.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff driver ------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without gradient needs a scalar output")
            grad = np.ones_like(self.data)

        # Iterative topological order (graphs can be deep at long horizons).
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): _as_array(grad)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        data = self.data + other.data
        a, b = self, other

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._result(data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._result(-a.data, (a,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._result(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return ga, gb

        return Tensor._result(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        a = self
        e = float(exponent)

        def backward(g):
            return (g * e * np.power(a.data, e - 1.0),)

        return Tensor._result(np.power(a.data, e), (a,), backward)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __getitem__(self, key):
        a = self
        data = a.data[key]

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            return (full,)

        return Tensor._result(data, (a,), backward)

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.shape
        return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inv = tuple(np.argsort(axes))
        return Tensor._result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))

    def swap_last(self):
        """Transpose the trailing two axes."""
        a = self
        return Tensor._result(
            np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),)
        )

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, a.shape).copy(),)

        return Tensor._result(data, (a,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(value) -> Tensor:
    return Tensor(value)


# -- free-function ops --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading batch dims must match (or be absent on one side).

    A 1-D left operand is treated as a single row (matching numpy) as long as
    the right operand is a plain matrix.
    """
    if b.ndim < 2:
        raise ValueError("matmul right operand must have at least 2 dims")
    if a.ndim == 1:
        if b.ndim != 2:
            raise ValueError("1-D left operand requires a 2-D right operand")
        return matmul(a.reshape(1, -1), b).reshape(-1)
    data = np.matmul(a.data, b.data)
    k = a.data.shape[-1]
    _count_madds(data.size * k)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(data, (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (g * 0.5 / out,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._result(out, (a,), backward)


def concatenate(parts: list[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(data, tuple(parts), backward)


def scatter_rows(src: Tensor, idx: np.ndarray, size: int) -> Tensor:
    """Place src rows at positions idx of a zero tensor with `size` rows."""
    idx = np.asarray(idx, dtype=np.int64)
    data = np.zeros((size,) + src.data.shape[1:])
    data[idx] = src.data
    return Tensor._result(data, (src,), lambda g: (g[idx],))


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows along axis 0 (embedding-table lookup)."""
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(data, (a,), backward)


def conv1d_same(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1-D convolution over the time axis with same padding, stride 1.

    x: (..., T, Cin); w: (K, Cin, Cout) with odd K; b: (Cout,) optional.
    """
    K, cin, cout = w.shape
    if K % 2 != 1:
        raise ValueError("kernel size must be odd for same padding")
    pad = K // 2
    T = x.data.shape[-2]
    pad_spec = [(0, 0)] * (x.data.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(x.data, pad_spec)
    cols = np.stack([xp[..., i : i + T, :] for i in range(K)], axis=-2)  # (...,T,K,Cin)
    cols2 = cols.reshape(*x.data.shape[:-1], K * cin)
    w2 = w.data.reshape(K * cin, cout)
    data = np.matmul(cols2, w2)
    _count_madds(data.size * K * cin)
    if b is not None:
        data = data + b.data

    def backward(g):
        gw2 = np.tensordot(cols2, g, axes=(range(cols2.ndim - 1), range(g.ndim - 1)))
        dcols2 = np.matmul(g, w2.T)
        dcols = dcols2.reshape(*x.data.shape[:-1], K, cin)
        dxp = np.zeros_like(xp)
        for i in range(K):
            dxp[..., i : i + T, :] += dcols[..., i, :]
        gx = dxp[..., pad : pad + T, :]
        gb = None if b is None else g.sum(axis=tuple(range(g.ndim - 1)))
        return (gx, gw2.reshape(K, cin, cout)) + (() if b is None else (gb,))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(data, parents, backward)

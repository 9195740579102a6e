"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A Tensor wraps one ndarray. Operations build a computation graph while
gradient recording is enabled (see `no_grad`); `Tensor.backward()` walks the
graph in reverse topological order and accumulates gradients into every
reachable tensor with ``requires_grad=True``. Everything is float64: the
gradient-checking tolerances used throughout the test suite are not reliable
in single precision.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference / numeric diff)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense float64 tensor with optional gradient tracking.

    `data` is row-major; `grad` (same shape) is populated by `backward()`.
    Tensors are value-like: no op mutates an input array.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- introspection -------------------------------------------------
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
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def assert_finite(self, name: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {name}")
        return self

    # -- autodiff core -------------------------------------------------
    def backward(self, grad=None):
        """Accumulate gradients of this tensor into all reachable leaves."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        self.grad = grad if self.grad is None else self.grad + grad

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` over axes that were broadcast so it matches `shape`."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        g = _unbroadcast(g, t.data.shape)
        t.grad = g if t.grad is None else t.grad + g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- elementwise arithmetic ---------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix product; operands of ndim >= 2, numpy batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")

    def backward(g):
        _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(np.matmul(a.data, b.data), (a, b), backward)


# -- shape ops -----------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _make(a.data.transpose(axes), (a,), backward)


def take(a, key) -> Tensor:
    """Basic (slice/int/ellipsis) indexing with scatter-add backward."""
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] += g
            _accumulate(a, full)

    return _make(a.data[key], (a,), backward)


def gather_rows(a, indices) -> Tensor:
    """Select rows of `a` (axis 0) by an integer array of any shape."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise TypeError("gather_rows needs integer indices")

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx.reshape(-1), g.reshape(-1, *a.data.shape[1:]))
            _accumulate(a, full)

    return _make(a.data[idx], (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accumulate(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


# -- reductions ------------------------------------------------------------

def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def max_(a, axis, keepdims=False) -> Tensor:
    """Max along one axis; the gradient routes to the first maximal entry."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=axis)

    def backward(g):
        if a.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            full = np.zeros_like(a.data)
            np.put_along_axis(full, np.expand_dims(arg, axis), gg, axis=axis)
            _accumulate(a, full)

    return _make(a.data.max(axis=axis, keepdims=keepdims), (a,), backward)


# -- pointwise nonlinearities ----------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(np.maximum(a.data, 0.0), (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * y)

    return _make(y, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where the input was strictly inside."""
    a = as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        _accumulate(a, g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), backward)


def dropout(a, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-p) at train time, identity otherwise."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def backward(g):
        _accumulate(a, g * keep)

    return _make(a.data * keep, (a,), backward)


# -- fused numerical ops -----------------------------------------------------

def softmax(a, axis=-1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    a = as_tensor(a)
    if a.data.shape[axis] == 0:
        raise ValueError("softmax of an empty axis")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            _accumulate(a, (g - inner) * y)

    return _make(y, (a,), backward)


def normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Scale the last axis to unit norm; rows with norm < eps map to zero.

    Composing normalized rows with a dot product yields cosine similarity
    where degenerate (near-zero) vectors contribute exactly 0.
    """
    a = as_tensor(a)
    norm = np.linalg.norm(a.data, axis=-1, keepdims=True)
    ok = norm >= eps
    safe = np.where(ok, norm, 1.0)
    y = np.where(ok, a.data / safe, 0.0)

    def backward(g):
        if a.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            _accumulate(a, np.where(ok, (g - inner * y) / safe, 0.0))

    return _make(y, (a,), backward)


def cosine(a, b) -> Tensor:
    """Cosine similarity of two equal-length vectors; 0 if either is near zero."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"cosine length mismatch: {a.data.shape} vs {b.data.shape}")
    return sum_(mul(normalize_rows(a), normalize_rows(b)), axis=-1)


# -- gradient checking --------------------------------------------------------

def grad_check(f, params, epsilon: float = 1e-5) -> float:
    """Compare reverse-mode gradients of scalar `f()` against central differences.

    `params` maps names to leaf tensors with requires_grad=True that `f`
    closes over. Returns the maximum over all coordinates of
    |analytic - numeric| / max(1, |analytic|).
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    if isinstance(params, dict):
        items = list(params.items())
    else:
        items = [(f"p{i}", p) for i, p in enumerate(params)]

    for _, p in items:
        p.grad = None
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("grad_check objective is non-finite")
    out.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in items}

    worst = 0.0
    with no_grad():
        for name, p in items:
            flat = p.data.reshape(-1)
            ana = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                hi = f().item()
                flat[i] = orig - epsilon
                lo = f().item()
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                err = abs(ana[i] - numeric) / max(1.0, abs(ana[i]))
                if err > worst:
                    worst = err
    return worst

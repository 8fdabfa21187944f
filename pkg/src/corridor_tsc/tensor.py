"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps a float32/float64 ndarray and records, when gradients are
enabled, how it was produced. Calling backward() on a scalar walks the
recorded graph once (iteratively, so deep recurrent graphs do not hit the
recursion limit) and accumulates d(scalar)/d(node) into node.grad.

Only the operations the recurrent world-model / actor-critic graphs need
are provided; everything else stays plain numpy.
"""

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (rollouts, acting, eval)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(data):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def assert_finite(self, what="tensor"):
        if not np.isfinite(self.data).all():
            raise FloatingPointError(f"non-finite values in {what}")
        return self

    # -- graph machinery ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = _toposort(self)
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; use mul + reciprocal constants")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def _accum(parent, contrib):
    # out-of-place accumulation: first contribution may alias another
    # node's grad buffer, so never mutate it in place
    if parent.grad is None:
        parent.grad = contrib
    else:
        parent.grad = parent.grad + contrib


def _unbroadcast(grad, shape):
    """Reduce grad back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _node(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- arithmetic -------------------------------------------------------------


def add(a, b):
    if isinstance(b, np.generic):
        b = b.item()  # numpy scalars are strong-typed and would upcast f32
    if not isinstance(b, Tensor):
        a_t = a

        def back_scalar(g):
            _accum(a_t, _unbroadcast(g, a_t.data.shape))

        return _node(a.data + b, (a,), back_scalar)
    if not isinstance(a, Tensor):
        return add(b, a)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), back)


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -b)
    if not isinstance(a, Tensor):
        return add(neg(b), a)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), back)


def neg(a):
    def back(g):
        _accum(a, -g)

    return _node(-a.data, (a,), back)


def mul(a, b):
    if isinstance(b, np.generic):
        b = b.item()
    if not isinstance(b, Tensor):
        a_t, c = a, b

        def back_scalar(g):
            _accum(a_t, _unbroadcast(g * c, a_t.data.shape))

        return _node(a.data * b, (a,), back_scalar)
    if not isinstance(a, Tensor):
        return mul(b, a)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), back)


def matmul(a, b):
    def back(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), back)


# -- elementwise nonlinearities ---------------------------------------------


def exp(a):
    out_data = np.exp(a.data)

    def back(g):
        _accum(a, g * out_data)

    return _node(out_data, (a,), back)


def log(a):
    def back(g):
        _accum(a, g / a.data)

    return _node(np.log(a.data), (a,), back)


def tanh(a):
    out_data = np.tanh(a.data)

    def back(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), back)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out_data = _sigmoid(a.data)

    def back(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), back)


def silu(a):
    return mul(a, sigmoid(a))


def maximum(a, floor):
    """Elementwise max with a python-scalar floor; grad passes where a > floor."""
    mask = a.data > floor

    def back(g):
        _accum(a, g * mask)

    return _node(np.maximum(a.data, floor), (a,), back)


def relu(a):
    return maximum(a, 0.0)


# -- reductions / shape -----------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge, a.data.shape).copy())

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]

    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / n, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge / n, a.data.shape).copy())

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


def reshape(a, shape):
    orig = a.data.shape

    def back(g):
        _accum(a, g.reshape(orig))

    return _node(a.data.reshape(shape), (a,), back)


def getitem(a, key):
    def back(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accum(a, full)

    return _node(a.data[key], (a,), back)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        parts = np.split(g, splits, axis=axis)
        for t, part in zip(tensors, parts):
            if t.requires_grad:
                _accum(t, part)

    return _node(np.concatenate(datas, axis=axis), tuple(tensors), back)


# -- fused ops for numerical stability / graph economy ----------------------


def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - dot))

    return _node(out_data, (a,), back)


def log_softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    probs = np.exp(out_data)

    def back(g):
        _accum(a, g - probs * g.sum(axis=axis, keepdims=True))

    return _node(out_data, (a,), back)


def layer_norm(x, gamma, beta, eps=1e-3):
    """Normalize over the last axis then apply the affine (gamma, beta)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def back(g):
        if gamma.requires_grad:
            axes = tuple(range(g.ndim - 1))
            _accum(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            axes = tuple(range(g.ndim - 1))
            _accum(beta, g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))

    return _node(out_data, (x, gamma, beta), back)


def bce_with_logits(logits, targets):
    """Stable binary cross-entropy against constant targets in [0, 1]."""
    x = logits.data
    t = np.asarray(targets, dtype=x.dtype)
    out_data = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))

    def back(g):
        _accum(logits, g * (_sigmoid(x) - t))

    return _node(out_data, (logits,), back)


def straight_through(sample, probs):
    """Forward the constant `sample`; route the backward pass to `probs`.

    The output carries sample's exact values (bit-exact one-hots) while
    gradients behave as if the output were `probs`.
    """
    sample = np.asarray(sample, dtype=probs.data.dtype)
    if sample.shape != probs.data.shape:
        raise ValueError("straight_through: sample/probs shape mismatch")

    def back(g):
        _accum(probs, g)

    return _node(sample, (probs,), back)


# -- parameter-level gradient extraction -------------------------------------


def grad(loss, params, check_finite=True):
    """Return d(loss)/d(p) for every parameter tensor in `params`.

    `params` is a ParamSet (or any name -> Tensor mapping). Parameters not
    reachable from `loss` get zero gradients. Raises on a non-scalar loss,
    a non-finite loss value, or (when check_finite) non-finite gradients.
    """
    if loss.data.size != 1:
        raise ValueError("loss must be scalar")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss")
    loss.backward()
    items = params.items() if hasattr(params, "items") else params
    out = {}
    for name, p in items:
        if p.grad is None:
            out[name] = np.zeros_like(p.data)
        else:
            if check_finite and not np.isfinite(p.grad).all():
                raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
            out[name] = p.grad
            p.grad = None
    return out

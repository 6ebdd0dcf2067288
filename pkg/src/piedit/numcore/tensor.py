"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` and, when any input requires a
gradient, remembers the operation that produced it.  Calling
:func:`backward` on a scalar walks that record in reverse topological order
and accumulates ``d loss / d leaf`` into every leaf that requires a gradient
(normally a :class:`Parameter`).
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf

__all__ = [
    "GraphError",
    "ShapeError",
    "Tensor",
    "Parameter",
    "as_tensor",
    "backward",
    "no_grad",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "getitem",
    "embedding_lookup",
    "add_bias",
    "gelu",
    "layer_norm",
    "softmax_rows",
    "masked_attention",
    "dropout",
    "weighted_cross_entropy",
]


class GraphError(RuntimeError):
    """Raised when backward is requested on something that has no graph."""


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A named leaf tensor whose gradient accumulates across backward calls."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(np.array(data), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return Tensor(arr)


_RECORDING = [True]


@contextlib.contextmanager
def no_grad():
    """Run ops without recording a graph (inference)."""
    _RECORDING.append(False)
    try:
        yield
    finally:
        _RECORDING.pop()


def _wrap(data, parents, backward_fn):
    """Build an op output, recording the graph only if some input needs it."""
    if _RECORDING[-1] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_shape(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: cannot broadcast {a.shape} with {b.shape}") from None


def _operands(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = as_tensor(b, a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(a, b.dtype)
    return as_tensor(a), as_tensor(b)


def backward(loss, grad=None):
    """Accumulate gradients of ``loss`` into every reachable leaf.

    Leaves keep their ``.grad`` between calls, so two backward passes without
    a ``zero_grad`` in between sum their contributions.
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise GraphError("backward() needs a tensor produced by a forward pass over parameters")
    if grad is None:
        if loss.data.size != 1:
            raise GraphError(f"backward() without an explicit grad needs a scalar, got shape {loss.shape}")
        grad = np.ones_like(loss.data)

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(loss): np.asarray(grad, dtype=loss.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _operands(a, b)
    _binary_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _wrap(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _operands(a, b)
    _binary_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _wrap(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _operands(a, b)
    _binary_shape(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _wrap(a.data * b.data, (a, b), bw)


def scale(x, factor):
    x = as_tensor(x)
    factor = x.dtype.type(factor)
    return _wrap(x.data * factor, (x,), lambda g: (g * factor,))


def add_bias(x, bias):
    """``x + bias`` where ``bias`` matches the trailing axis of ``x``."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not match trailing axis of {x.shape}")
    return add(x, bias)


def gelu(x):
    """Exact (erf based) GELU."""
    x = as_tensor(x)
    inv_sqrt2 = x.dtype.type(1.0 / np.sqrt(2.0))
    cdf = 0.5 * (1.0 + erf(x.data * inv_sqrt2))
    out = (x.data * cdf).astype(x.dtype, copy=False)

    def bw(g):
        pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),)

    return _wrap(out, (x,), bw)


# -------------------------------------------------------------------- linear


def matmul(a, b):
    a, b = _operands(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    folded = b.ndim == 2 and a.ndim > 2
    if folded:
        # one GEMM over all leading axes instead of a stack of small ones
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
    else:
        try:
            out = np.matmul(a.data, b.data)
        except ValueError:
            raise ShapeError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}") from None

    def bw(g):
        ga = gb = None
        if folded:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ b.data.T).reshape(a.shape)
            if b.requires_grad:
                gb = a2.T @ g2
            return ga, gb
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _wrap(out, (a, b), bw)


# ---------------------------------------------------------------- reductions


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _wrap(out, (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------------- shaping


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _wrap(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _wrap(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _wrap(out, tuple(tensors), bw)


def getitem(x, index):
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _wrap(x.data[index], (x,), bw)


def embedding_lookup(table, ids):
    """Rows of ``table`` selected by the integer array ``ids`` (any shape)."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding_lookup: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: id out of range for table {table.shape}")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _wrap(table.data[ids], (table,), bw)


# ------------------------------------------------------------ normalisation


def layer_norm(x, gain, bias, eps=1e-12):
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    out = xhat * gain.data + bias.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gxhat = g * gain.data
            d = x.shape[-1]
            gx = inv_std / d * (
                d * gxhat
                - gxhat.sum(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
            )
        ggain = _unbroadcast(g * xhat, gain.shape) if gain.requires_grad else None
        gbias = _unbroadcast(g, bias.shape) if bias.requires_grad else None
        return gx, ggain, gbias

    return _wrap(out, (x, gain, bias), bw)


def softmax_rows(x, mask=None):
    """Softmax over the last axis; ``mask`` (broadcastable bool) marks allowed entries.

    Every row must keep at least one allowed entry.
    """
    x = as_tensor(x)
    scores = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        try:
            scores = np.where(mask, scores, -np.inf)
        except ValueError:
            raise ShapeError(f"softmax_rows: mask {mask.shape} vs scores {x.shape}") from None
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax_rows: a row has no allowed entries")
    peak = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - peak)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _wrap(y, (x,), bw)


def masked_attention(q, k, v, mask=None):
    """Scaled dot-product attention, ``mask[..., i, j]`` true if query i may see key j."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"masked_attention: q {q.shape}, k {k.shape}, v {v.shape}")
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = scale(matmul(q, transpose(k, axes)), 1.0 / np.sqrt(q.shape[-1]))
    return matmul(softmax_rows(scores, mask), v)


def dropout(x, rate, rng, training=True):
    """Inverted dropout; identity when not training or ``rate == 0``."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return mul(x, keep)


# ---------------------------------------------------------------------- loss


def weighted_cross_entropy(logits, targets, weights):
    """``-sum_i weights[i] * log softmax(logits[i])[targets[i]]`` over all leading axes.

    Positions with weight 0 (padding) contribute neither loss nor gradient.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    weights = np.asarray(weights, dtype=logits.dtype)
    if logits.shape[:-1] != targets.shape or targets.shape != weights.shape:
        raise ShapeError(
            f"weighted_cross_entropy: logits {logits.shape}, targets {targets.shape}, weights {weights.shape}"
        )
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(weights * picked).sum()

    def bw(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        return ((g * weights)[..., None] * (p - onehot),)

    return _wrap(np.asarray(loss, dtype=logits.dtype), (logits,), bw)

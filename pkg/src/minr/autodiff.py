"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Everything is float64. A dynamic graph is recorded per forward pass and
freed when `backward` runs. The op set is deliberately small and closed:
anything not in `OP_TABLE` is a bug in the caller, not a missing feature.

Broadcasting is restricted: `add` and `mul` accept a second operand whose
shape equals the trailing dims of the first (bias vectors, layernorm
gains); every other shape mismatch raises. Silent broadcasts are the
dominant failure mode in hand-rolled engines, so we refuse them.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

# When True, every op validates that its inputs are finite.
DEBUG_CHECK_FINITE = False

_node_counter = itertools.count()

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715
_LN_EPS = 1e-5


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense float64 array plus (optionally) a recorded position in a graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents",
                 "_backward", "_consumed")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_counter)
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data):
    return Tensor(data, requires_grad=False)


def parameter(data):
    return Tensor(data, requires_grad=True)


def _check_finite(op_kind, tensors):
    if DEBUG_CHECK_FINITE:
        for t in tensors:
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"{op_kind}: non-finite input tensor")


def _make(op_kind, inputs, data, backward_fn):
    _check_finite(op_kind, inputs)
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._parents = tuple(inputs)
        out._backward = backward_fn
    return out


def _accum(tensor, grad, own=False):
    """Accumulate into tensor.grad.

    own=True promises `grad` is freshly allocated, not aliased anywhere
    else, so the first accumulation may adopt it without copying.
    """
    if tensor.requires_grad:
        if tensor.grad is None:
            tensor.grad = grad if own else grad.copy()
        else:
            tensor.grad += grad


def _trailing_broadcast_ok(a_shape, b_shape):
    k = len(b_shape)
    return k <= len(a_shape) and a_shape[len(a_shape) - k:] == b_shape


def _reduce_to(grad, shape):
    # Sum out the leading axes broadcast over by add/mul.
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.ndim != b.data.ndim \
            or a.data.shape[:-2] != b.data.shape[:-2] \
            or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    y = a.data @ b.data

    def back(g):
        _accum(a, g @ np.swapaxes(b.data, -1, -2), own=True)
        _accum(b, np.swapaxes(a.data, -1, -2) @ g, own=True)

    return _make("matmul", (a, b), y, back)


def add(a, b):
    if a.shape != b.shape and not _trailing_broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    y = a.data + b.data
    broadcast = a.shape != b.shape

    def back(g):
        _accum(a, g)
        _accum(b, _reduce_to(g, b.shape), own=broadcast)

    return _make("add", (a, b), y, back)


def mul(a, b):
    if a.shape != b.shape and not _trailing_broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    y = a.data * b.data

    def back(g):
        _accum(a, g * b.data, own=True)
        _accum(b, _reduce_to(g * a.data, b.shape), own=True)

    return _make("mul", (a, b), y, back)


def scale(a, c):
    c = float(c)
    y = a.data * c

    def back(g):
        _accum(a, g * c, own=True)

    return _make("scale", (a,), y, back)


def relu(a):
    y = np.maximum(a.data, 0.0)

    def back(g):
        _accum(a, g * (a.data > 0.0), own=True)

    return _make("relu", (a,), y, back)


def gelu(a):
    # tanh approximation; constants fixed so implementations agree exactly
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * x2 * x))
    y = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        _accum(a, g * dy, own=True)

    return _make("gelu", (a,), y, back)


def sin(a):
    y = np.sin(a.data)

    def back(g):
        _accum(a, g * np.cos(a.data), own=True)

    return _make("sin", (a,), y, back)


def softmax_lastdim(a):
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - dot), own=True)

    return _make("softmax_lastdim", (a,), y, back)


def layernorm_lastdim(a):
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    y = xc * inv

    def back(g):
        n = x.shape[-1]
        _accum(a, inv * (g - g.mean(axis=-1, keepdims=True)
                         - y * (g * y).sum(axis=-1, keepdims=True) / n),
               own=True)

    return _make("layernorm_lastdim", (a,), y, back)


def tsum(a):
    y = np.float64(a.data.sum())

    def back(g):
        _accum(a, np.full_like(a.data, float(g)), own=True)

    return _make("sum", (a,), y, back)


def tmean(a):
    n = a.data.size
    y = np.float64(a.data.mean())

    def back(g):
        _accum(a, np.full_like(a.data, float(g) / n), own=True)

    return _make("mean", (a,), y, back)


def mse(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mse: incompatible shapes {a.shape} and {b.shape}")
    d = a.data - b.data
    y = np.float64((d ** 2).mean())

    def back(g):
        gd = float(g) * 2.0 * d / d.size
        _accum(a, gd, own=True)
        _accum(b, -gd, own=True)

    return _make("mse", (a, b), y, back)


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}")
    y = a.data.reshape(shape)

    def back(g):
        _accum(a, g.reshape(a.data.shape))

    return _make("reshape", (a,), y, back)


def transpose_last2(a):
    if a.data.ndim < 2:
        raise ShapeError(f"transpose_last2: rank-{a.data.ndim} input {a.shape}")
    y = np.swapaxes(a.data, -1, -2)

    def back(g):
        _accum(a, np.swapaxes(g, -1, -2))

    return _make("transpose_last2", (a,), y, back)


def concat_lastdim(tensors):
    tensors = list(tensors)
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat_lastdim: incompatible shapes {tensors[0].shape} and {t.shape}")
    y = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.shape[-1] for t in tensors]

    def back(g):
        o = 0
        for t, w in zip(tensors, widths):
            _accum(t, g[..., o:o + w])
            o += w

    return _make("concat_lastdim", tuple(tensors), y, back)


def slice_lastdim(a, start, stop):
    start, stop = int(start), int(stop)
    if not (0 <= start <= stop <= a.shape[-1]):
        raise ShapeError(f"slice_lastdim: [{start}:{stop}] out of range for {a.shape}")
    y = a.data[..., start:stop].copy()

    def back(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        _accum(a, full, own=True)

    return _make("slice_lastdim", (a,), y, back)


def embedding_lookup(table, indices):
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be rank 2, got {table.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: index out of range for table {table.shape}")
    y = table.data[idx]

    def back(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _make("embedding_lookup", (table,), y, back)


OP_TABLE = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "scale": scale,
    "relu": relu,
    "gelu": gelu,
    "sin": sin,
    "softmax_lastdim": softmax_lastdim,
    "layernorm_lastdim": layernorm_lastdim,
    "sum": tsum,
    "mean": tmean,
    "mse": mse,
    "reshape": reshape,
    "transpose_last2": transpose_last2,
    "concat_lastdim": concat_lastdim,
    "slice_lastdim": slice_lastdim,
    "embedding_lookup": embedding_lookup,
}


def apply(op_kind, *inputs, **kwargs):
    """Dispatch entry point: apply("matmul", a, b) etc."""
    if op_kind not in OP_TABLE:
        raise KeyError(f"unknown op_kind {op_kind!r}")
    return OP_TABLE[op_kind](*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward


def backward(loss):
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    The recorded graph is freed afterwards; a second backward through the
    same loss raises.
    """
    if loss.data.ndim not in (0, 1) or loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss._consumed:
        raise RuntimeError("backward: graph already consumed (backward called twice?)")
    loss._consumed = True

    # iterative topological order over the recorded graph
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
        for p in node._parents:
            if p._backward is not None or p._parents:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad if node.grad is not None
                           else np.zeros_like(node.data))
        node._backward = None
        node._parents = ()


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(build_loss, params, tolerance=1e-4, eps=1e-5):
    """Compare analytic gradients against central finite differences.

    build_loss(params) must rebuild the scalar loss from scratch each call
    (the graph is dynamic). Returns a dict with per-parameter max relative
    error and an overall pass flag; failures are reported, never raised.
    """
    for p in params.values():
        p.zero_grad()
    loss = build_loss(params)
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    errors = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi = float(build_loss(params).data)
            flat[i] = orig - eps
            lo_lo = float(build_loss(params).data)
            flat[i] = orig
            num[i] = (lo_hi - lo_lo) / (2.0 * eps)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        errors[name] = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0

    worst = max(errors.values()) if errors else 0.0
    return {
        "per_param": errors,
        "max_relative_error": worst,
        "passed": worst < tolerance,
        "tolerance": tolerance,
    }

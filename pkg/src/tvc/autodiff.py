"""Reverse-mode automatic differentiation over dense numpy arrays.

A `Tensor` wraps a contiguous float array and records the operation that
produced it. Calling `backward()` on a scalar loss walks the recorded graph
once in reverse topological order and accumulates gradients into every
tensor created with `requires_grad=True`.

Design constraints:
  * float32 is the default dtype; float64 is supported so gradient checks
    can run at full precision.
  * broadcasting is limited to suffix alignment (a bias of shape (C,) may
    be added to (..., C)); anything else requires an explicit reshape.
  * conv3d is causal in time: output index t never reads input indices
    beyond t * stride_t.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_mac_events = None


class record_macs:
    """Context manager collecting (kind, dims, ...) events for MAC accounting."""

    def __init__(self):
        self.events = []

    def __enter__(self):
        global _mac_events
        self._prev = _mac_events
        _mac_events = self.events
        return self.events

    def __exit__(self, *exc):
        global _mac_events
        _mac_events = self._prev
        return False


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    # --- bookkeeping -----------------------------------------------------

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

    def item(self):
        return float(self.data)

    def detach(self):
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        return t

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # --- graph construction ----------------------------------------------

    def backward(self):
        if self.data.ndim != 0 and self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
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
                if id(p) not in visited:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # --- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = False
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        t._parents = parents
        t._backward = backward
    else:
        t._parents = ()
        t._backward = None
    return t


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (suffix-aligned broadcasting only)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b):
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    small, large = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    for x, y in zip(reversed(small), reversed(large)):
        if x != y and x != 1 and y != 1:
            raise ValueError(f"shapes {sa} and {sb} are not suffix-broadcastable")


# --- elementwise ---------------------------------------------------------


def add(a, b):
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data * b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def power(a, p):
    a = _wrap(a, None)
    out = a.data**p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,))


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    # log(1+e^x) computed stably; derivative is sigmoid(x)
    out = np.logaddexp(0.0, a.data).astype(a.dtype)
    return _make(out, (a,), lambda g: (g / (1.0 + np.exp(-a.data)),))


def absolute(a):
    out = np.abs(a.data)
    return _make(out, (a,), lambda g: (g * np.sign(a.data),))


def normal_cdf(a):
    """Standard normal CDF; gradient is the normal density."""
    out = ndtr(a.data).astype(a.dtype)
    inv_sqrt_2pi = 0.3989422804014327
    return _make(
        out, (a,), lambda g: (g * inv_sqrt_2pi * np.exp(-0.5 * a.data * a.data),)
    )


def gelu(a):
    return mul(a, normal_cdf(a))


def stop_gradient(a):
    return a.detach()


# --- shape ops -----------------------------------------------------------


def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.shape
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)
    return _make(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis):
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), backward)


def slice_axis(a, axis, start, stop):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(out, (a,), backward)


def repeat_axis(a, k, axis):
    """Repeat each element k times along axis (nearest-neighbor upsampling)."""
    out = np.repeat(a.data, k, axis=axis)

    def backward(g):
        shape = list(a.shape)
        shape[axis:axis + 1] = [a.shape[axis], k]
        return (g.reshape(shape).sum(axis=axis + 1),)

    return _make(out, (a,), backward)


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[i] for i in axis]))
    else:
        count = a.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / count, a.shape).copy(),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), backward)


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects rank-2 operands; reshape explicitly")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    if _mac_events is not None:
        _mac_events.append(("matmul", (a.shape[0], a.shape[1], b.shape[1])))
    out = a.data @ b.data
    return _make(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# --- softmax family ------------------------------------------------------


def softmax(a, axis=-1):
    shifted = sub(a, Tensor(a.data.max(axis=axis, keepdims=True)))
    e = exp(shifted)
    return div(e, tsum(e, axis=axis, keepdims=True))


def log_softmax(a, axis=-1):
    shifted = sub(a, Tensor(a.data.max(axis=axis, keepdims=True)))
    return sub(shifted, log(tsum(exp(shifted), axis=axis, keepdims=True)))


# --- 3D causal convolution ------------------------------------------------

_patch_index_cache = {}


def _patch_indices(padded_shape, kernel, stride):
    key = (padded_shape, kernel, stride)
    idx = _patch_index_cache.get(key)
    if idx is None:
        flat = np.arange(int(np.prod(padded_shape)), dtype=np.int64).reshape(padded_shape)
        win = np.lib.stride_tricks.sliding_window_view(flat, kernel, axis=(0, 1, 2))
        win = win[:: stride[0], :: stride[1], :: stride[2]]
        # (To,Ho,Wo,Cin,kt,kh,kw) -> (N, kt*kh*kw*Cin)
        win = win.transpose(0, 1, 2, 4, 5, 6, 3)
        idx = np.ascontiguousarray(win.reshape(-1, int(np.prod(kernel)) * padded_shape[3]))
        if len(_patch_index_cache) > 64:
            _patch_index_cache.clear()
        _patch_index_cache[key] = idx
    return idx


def conv3d_causal(x, w, b=None, stride=(1, 1, 1)):
    """Causal 3D convolution.

    x: (T,H,W,Cin), w: (kt,kh,kw,Cin,Cout), b: (Cout,) or None.
    Temporal padding is left-only (kt-1 zeros), so output index t reads
    input indices <= t*stride_t. Spatial padding is symmetric and needs an
    odd kernel extent.
    """
    kt, kh, kw, cin, cout = w.shape
    if x.ndim != 4 or x.shape[3] != cin:
        raise ValueError(f"conv3d input {x.shape} incompatible with kernel {w.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("spatial kernel extents must be odd")
    st, sh, sw = stride
    if st < 1 or sh < 1 or sw < 1:
        raise ValueError("stride components must be >= 1")
    pads = ((kt - 1, 0), (kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0))
    xp = np.pad(x.data, pads)
    t_out = (x.shape[0] - 1) // st + 1
    h_out = (x.shape[1] - 1) // sh + 1
    w_out = (x.shape[2] - 1) // sw + 1
    if _mac_events is not None:
        _mac_events.append(("conv3d", (kt, kh, kw, cin, cout), t_out * h_out * w_out))

    win = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(0, 1, 2))
    win = win[::st, ::sh, ::sw].transpose(0, 1, 2, 4, 5, 6, 3)
    patches = np.ascontiguousarray(win.reshape(t_out * h_out * w_out, kt * kh * kw * cin))
    wmat = w.data.reshape(-1, cout)
    out2d = patches @ wmat
    if b is not None:
        out2d = out2d + b.data
    out = out2d.reshape(t_out, h_out, w_out, cout)

    def backward(g):
        g2d = g.reshape(-1, cout)
        gw = (patches.T @ g2d).reshape(w.shape)
        gpatches = g2d @ wmat.T
        idx = _patch_indices(xp.shape, (kt, kh, kw), (st, sh, sw))
        flat = np.bincount(idx.ravel(), weights=gpatches.ravel().astype(np.float64), minlength=xp.size)
        gx = flat.reshape(xp.shape)[kt - 1:, kh // 2: kh // 2 + x.shape[1], kw // 2: kw // 2 + x.shape[2], :]
        gx = np.ascontiguousarray(gx, dtype=x.dtype)
        gb = g2d.sum(axis=0) if b is not None else None
        if b is not None:
            return (gx, gw, gb)
        return (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, backward)


# --- attention ------------------------------------------------------------


def attention(q, k, v):
    """Scaled dot-product attention: softmax(q@kT/sqrt(d)) @ v.

    q: (Nq,d), k,v: (Nk,d). Rows of the attention matrix sum to 1.
    """
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects rank-2 q,k,v")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query/key width mismatch: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"key/value count mismatch: {k.shape} vs {v.shape}")
    if k.shape[0] < 1:
        raise ValueError("attention needs at least one key")
    scale = 1.0 / float(np.sqrt(q.shape[1]))
    logits = mul(matmul(q, transpose(k, (1, 0))), scale)
    return matmul(softmax(logits, axis=-1), v)

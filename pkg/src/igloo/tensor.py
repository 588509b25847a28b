"""Dense tensor type and the differentiable operation set.

Values are numpy arrays in float64 by default (float32 opt-in). Axis order
is (time, channel) for single sequences and (batch, time, channel) once
batched. Ops run eagerly; when a Tape (see autodiff) is active they also
record a backward closure, so the same code path serves training and
inference.

Checked mode (`set_checked`) validates that every op output is finite and
raises NumericsError otherwise. Tests switch it on, benchmarks leave it off.
"""

import os

import numpy as np

from . import kernels
from .errors import DataError, NumericsError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)

_checked = bool(int(os.environ.get("IGLOO_CHECKED", "0") or "0"))

# testing aid: scales the relu backward rule so gradient checkers can prove
# they detect a corrupted rule. 1.0 means correct gradients.
_relu_grad_scale = 1.0

# the currently recording tape, managed by autodiff.Tape
_active_tape = [None]


def set_checked(on):
    """Enable/disable finite-value checking after every op. Returns prior state."""
    global _checked
    prior = _checked
    _checked = bool(on)
    return prior


def checked():
    return _checked


def set_relu_grad_corruption(scale):
    """Testing aid: multiply the relu backward rule by `scale` (1.0 = correct)."""
    global _relu_grad_scale
    _relu_grad_scale = float(scale)


class Tensor:
    """A dense float array plus the bookkeeping reverse-mode AD needs.

    Leaf tensors created with requires_grad=True are trainable parameters;
    tensors produced by ops under an active tape carry a backward closure.
    Data is treated as immutable once the tensor participates in a graph
    (the optimizer mutates leaf .data between graphs, never inside one).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar over the functional ops below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value, dtype=None):
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def _check_finite(arr, op):
    if _checked and not np.all(np.isfinite(arr)):
        raise NumericsError(f"{op} produced non-finite values")


def _result(data, op, parents, backward):
    """Wrap op output; register on the active tape when gradients are needed."""
    _check_finite(data, op)
    out = Tensor(data)
    tape = _active_tape[0]
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape._register(out)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def backward(dout):
        _accum(a, _unbroadcast(dout, a.data.shape))
        _accum(b, _unbroadcast(dout, b.data.shape))

    return _result(data, "add", (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def backward(dout):
        _accum(a, _unbroadcast(dout * b.data, a.data.shape))
        _accum(b, _unbroadcast(dout * a.data, b.data.shape))

    return _result(data, "mul", (a, b), backward)


def relu(x):
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backward(dout):
        # subgradient 0 at exactly 0
        _accum(x, dout * (x.data > 0) * _relu_grad_scale)

    return _result(data, "relu", (x,), backward)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def sum_axes(x, axes, keepdims=False):
    x = as_tensor(x)
    axes = tuple(axes) if not isinstance(axes, int) else (axes,)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(dout):
        g = dout
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(g, x.data.shape).copy())

    return _result(data, "sum_axes", (x,), backward)


def tile(x, n):
    """Duplicate n times along a new axis inserted before the last axis (H_J)."""
    x = as_tensor(x)
    data = np.repeat(np.expand_dims(x.data, -2), n, axis=-2)

    def backward(dout):
        _accum(x, dout.sum(axis=-2))

    return _result(data, "tile", (x,), backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    axes_ = tuple(reversed(range(x.data.ndim))) if axes is None else tuple(axes)
    data = np.transpose(x.data, axes_)
    inverse = np.argsort(axes_)

    def backward(dout):
        _accum(x, np.transpose(dout, inverse))

    return _result(data, "transpose", (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(dout):
        _accum(x, dout.reshape(x.data.shape))

    return _result(data, "reshape", (x,), backward)


def slice_axis(x, axis, start, stop):
    x = as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = x.data[index]

    def backward(dout):
        g = np.zeros_like(x.data)
        g[index] = dout
        _accum(x, g)

    return _result(data, "slice_axis", (x,), backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(dout):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * dout.ndim
            index[axis] = slice(lo, hi)
            _accum(t, dout[tuple(index)])

    return _result(data, "concat", tuple(tensors), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product for the layouts the layers need.

    Supported: (m,n)@(n,q), (B,m,n)@(n,q), (B,m,n)@(B,n,q).
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: inner dims disagree for {ad.shape} @ {bd.shape}")
        data = ad @ bd

        def backward(dout):
            _accum(a, dout @ bd.T)
            _accum(b, ad.T @ dout)

    elif ad.ndim == 3 and bd.ndim == 2:
        if ad.shape[2] != bd.shape[0]:
            raise ShapeError(f"matmul: inner dims disagree for {ad.shape} @ {bd.shape}")
        data = ad @ bd

        def backward(dout):
            _accum(a, dout @ bd.T)
            _accum(b, np.tensordot(ad, dout, axes=([0, 1], [0, 1])))

    elif ad.ndim == 3 and bd.ndim == 3:
        if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
            raise ShapeError(f"matmul: batch shapes disagree for {ad.shape} @ {bd.shape}")
        data = ad @ bd

        def backward(dout):
            _accum(a, dout @ bd.transpose(0, 2, 1))
            _accum(b, ad.transpose(0, 2, 1) @ dout)

    else:
        raise ShapeError(f"matmul: unsupported ranks {ad.shape} @ {bd.shape}")

    return _result(data, "matmul", (a, b), backward)


# ---------------------------------------------------------------------------
# gather / convolution / patch reduction
# ---------------------------------------------------------------------------

def gather_time(f, indices):
    """Select rows along the time axis; duplicates allowed.

    f is (L,K) or (B,L,K); indices is a 1-D sequence of time positions.
    Backward scatter-adds, so duplicated indices accumulate gradient.
    """
    f = as_tensor(f)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_time: indices must be 1-D, got shape {idx.shape}")
    length = f.data.shape[-2]
    bad = (idx < 0) | (idx >= length)
    if bad.any():
        raise IndexError(f"gather_time: index {int(idx[bad][0])} out of range [0, {length})")
    data = f.data[..., idx, :]

    def backward(dout):
        g = np.zeros_like(f.data)
        if f.data.ndim == 2:
            np.add.at(g, idx, dout)
        else:
            np.add.at(g, (slice(None), idx), dout)
        _accum(f, g)

    return _result(data, "gather_time", (f,), backward)


def _as_batched(x):
    """Promote (L, C) to (1, L, C); report whether a batch axis was added."""
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected rank 2 or 3 input, got shape {x.shape}")


def causal_conv1d(x, kernel, bias):
    """Causal conv along time: x (L,M) or (B,L,M), kernel (w,M,K), bias (K).

    Output at time t depends only on x[0..t]; the left edge is zero-padded.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    xd, was_2d = _as_batched(x.data)
    if kernel.data.ndim != 3 or kernel.data.shape[1] != xd.shape[2]:
        raise ShapeError(
            f"causal_conv1d: kernel {kernel.shape} does not fit input {x.shape}"
        )
    if bias.data.shape != (kernel.data.shape[2],):
        raise ShapeError(f"causal_conv1d: bias {bias.shape} vs kernel {kernel.shape}")
    out = kernels.causal_conv1d(xd, kernel.data, bias.data)
    data = out[0] if was_2d else out

    def backward(dout):
        dy = dout[None] if was_2d else dout
        dx, dk, db = kernels.causal_conv1d_backward(xd, kernel.data, dy)
        _accum(x, dx[0] if was_2d else dx)
        _accum(kernel, dk)
        _accum(bias, db)

    return _result(data, "causal_conv1d", (x, kernel, bias), backward)


def patch_reduce(f, idx, weight, bias):
    """Gather patch rows from a feature map, filter pointwise, reduce.

    f is (L,K) or (B,L,K). idx is (J,p) for one whole-sequence reduction
    (output (..., J)) or (L,J,p) for per-step reductions (output (..., L, J)).
    weight is (p,K,J), bias (J). Backward scatter-adds into f.
    """
    f, weight, bias = as_tensor(f), as_tensor(weight), as_tensor(bias)
    idx = np.asarray(idx, dtype=np.int64)
    fd, was_2d = _as_batched(f.data)
    if idx.ndim == 2:
        idx3 = idx[None]
        per_step = False
    elif idx.ndim == 3:
        idx3 = idx
        per_step = True
    else:
        raise ShapeError(f"patch_reduce: idx must be (J,p) or (L,J,p), got {idx.shape}")
    n_patches, patch_size = idx3.shape[1], idx3.shape[2]
    if weight.data.shape != (patch_size, fd.shape[2], n_patches):
        raise ShapeError(
            f"patch_reduce: weight {weight.shape} does not match idx {idx.shape} "
            f"and feature map {f.shape}"
        )
    if bias.data.shape != (n_patches,):
        raise ShapeError(f"patch_reduce: bias {bias.shape}, expected ({n_patches},)")
    if idx3.min() < 0 or idx3.max() >= fd.shape[1]:
        raise IndexError(
            f"patch_reduce: index out of range [0, {fd.shape[1]}) in plan"
        )
    out = kernels.patch_reduce(fd, idx3, weight.data, bias.data)  # (B,S,J)
    if not per_step:
        out = out[:, 0, :]
    data = out[0] if was_2d else out

    def backward(dout):
        dy = dout[None] if was_2d else dout
        if not per_step:
            dy = dy[:, None, :]
        df, dw, db = kernels.patch_reduce_backward(fd, idx3, weight.data, dy)
        _accum(f, df[0] if was_2d else df)
        _accum(weight, dw)
        _accum(bias, db)

    return _result(data, "patch_reduce", (f, weight, bias), backward)


# ---------------------------------------------------------------------------
# softmax and loss heads
# ---------------------------------------------------------------------------

def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x):
    """Softmax over the last axis, computed with max-subtraction."""
    x = as_tensor(x)
    data = _softmax(x.data)

    def backward(dout):
        inner = (dout * data).sum(axis=-1, keepdims=True)
        _accum(x, data * (dout - inner))

    return _result(data, "softmax", (x,), backward)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy of integer targets, fused with softmax for stability.

    logits (..., C) against integer targets (...); the mean runs over every
    leading position. Returns a scalar tensor.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    n_classes = logits.data.shape[-1]
    if t.shape != logits.data.shape[:-1]:
        raise ShapeError(
            f"cross_entropy: targets {t.shape} vs logits {logits.shape}"
        )
    if t.min() < 0 or t.max() >= n_classes:
        raise DataError(f"cross_entropy: class index out of range [0, {n_classes})")
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=-1)) + zmax[..., 0]
    picked = np.take_along_axis(z, t[..., None], axis=-1)[..., 0]
    n = t.size
    data = np.asarray((lse - picked).sum() / n, dtype=z.dtype)

    def backward(dout):
        g = _softmax(z)
        np.subtract.at(g, tuple(np.indices(t.shape)) + (t,), 1.0)
        _accum(logits, g * (dout / n))

    return _result(data, "softmax_cross_entropy", (logits,), backward)


def mse_loss(pred, target):
    """Mean squared error over all elements. Returns a scalar tensor."""
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.data.shape:
        raise ShapeError(f"mse: target {t.shape} vs prediction {pred.shape}")
    diff = pred.data - t
    n = diff.size
    data = np.asarray((diff * diff).sum() / n, dtype=pred.data.dtype)

    def backward(dout):
        _accum(pred, diff * (2.0 * dout / n))

    return _result(data, "mse_loss", (pred,), backward)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def spatial_dropout(x, rate, training, rng):
    """Zero whole channels with probability `rate` during training.

    Surviving channels scale by 1/(1-rate) so expectations match inference.
    Identity when not training or rate == 0. x is (..., L, K); the mask is
    drawn per channel (last axis) from `rng`.
    """
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"spatial_dropout: rate must be in [0, 1), got {rate}")
    keep = rng.random(x.data.shape[-1]) >= rate
    mask = keep.astype(x.data.dtype) / (1.0 - rate)
    return mul(x, Tensor(mask))

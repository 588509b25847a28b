"""Hot numeric kernels: causal 1D convolution and patch gather-reduce.

Each kernel ships in two implementations. The numba versions are plain
serial loops (deterministic summation order, no fastmath) compiled with
@njit(cache=True); the numpy versions express the same arithmetic with
vectorized indexing and einsum. They agree to float rounding, not bitwise:
tests compare both against naive-loop oracles at 1e-12.

Array layouts are fixed: inputs are (batch, time, channel). The gather
index array has shape (steps, patches, patch_size); the base block passes
steps=1, the per-step sequence block passes steps=L.

Outputs are allocated here in Python (np.zeros) and filled by the kernels,
so memory profilers see every significant buffer either way.
"""

import numpy as np

from .backend import HAS_NUMBA, active_backend

if HAS_NUMBA:
    from numba import njit
else:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco(args[0]) if args and callable(args[0]) else deco


# ---------------------------------------------------------------------------
# causal 1D convolution
# y[b, t, k] = bias[k] + sum_{i<w, m<M} x[b, t-w+1+i, m] * kernel[i, m, k]
# with x[:, <0, :] treated as zero (left zero-padding of w-1 rows).
# ---------------------------------------------------------------------------

def conv1d_fwd_numpy(x, kernel, bias, out):
    length = x.shape[1]
    width = kernel.shape[0]
    out += bias
    for i in range(width):
        shift = width - 1 - i  # tap i reads x shifted this far into the past
        if shift == 0:
            out += x @ kernel[i]
        elif shift < length:
            out[:, shift:, :] += x[:, : length - shift, :] @ kernel[i]
    return out


@njit(cache=True)
def conv1d_fwd_numba(x, kernel, bias, out):
    n_batch, length, n_in = x.shape
    width, _, n_out = kernel.shape
    for b in range(n_batch):
        for t in range(length):
            for k in range(n_out):
                acc = bias[k]
                for i in range(width):
                    src = t - width + 1 + i
                    if src >= 0:
                        for m in range(n_in):
                            acc += x[b, src, m] * kernel[i, m, k]
                out[b, t, k] = acc
    return out


def conv1d_bwd_numpy(x, kernel, dy, dx, dkernel, dbias):
    length = x.shape[1]
    width = kernel.shape[0]
    dbias += dy.sum(axis=(0, 1))
    for i in range(width):
        shift = width - 1 - i
        if shift == 0:
            dkernel[i] += np.tensordot(x, dy, axes=([0, 1], [0, 1]))
            dx += dy @ kernel[i].T
        elif shift < length:
            x_part = x[:, : length - shift, :]
            dy_part = dy[:, shift:, :]
            dkernel[i] += np.tensordot(x_part, dy_part, axes=([0, 1], [0, 1]))
            dx[:, : length - shift, :] += dy_part @ kernel[i].T
    return dx, dkernel, dbias


@njit(cache=True)
def conv1d_bwd_numba(x, kernel, dy, dx, dkernel, dbias):
    n_batch, length, n_in = x.shape
    width, _, n_out = kernel.shape
    for b in range(n_batch):
        for t in range(length):
            for k in range(n_out):
                g = dy[b, t, k]
                dbias[k] += g
                for i in range(width):
                    src = t - width + 1 + i
                    if src >= 0:
                        for m in range(n_in):
                            dkernel[i, m, k] += x[b, src, m] * g
                            dx[b, src, m] += kernel[i, m, k] * g
    return dx, dkernel, dbias


# ---------------------------------------------------------------------------
# patch gather-reduce
# u[b, s, j] = bias[j] + sum_{i<p, c<K} f[b, idx[s, j, i], c] * weight[i, c, j]
# The backward pass scatter-adds into df; duplicate indices accumulate.
# ---------------------------------------------------------------------------

def patch_reduce_fwd_numpy(f, idx, weight, bias, out):
    gathered = f[:, idx, :]  # (B, S, J, p, K)
    out += np.einsum("bsjpk,pkj->bsj", gathered, weight)
    out += bias
    return out


@njit(cache=True)
def patch_reduce_fwd_numba(f, idx, weight, bias, out):
    n_batch = f.shape[0]
    n_channels = f.shape[2]
    n_steps, n_patches, patch_size = idx.shape
    for b in range(n_batch):
        for s in range(n_steps):
            for j in range(n_patches):
                acc = bias[j]
                for i in range(patch_size):
                    t = idx[s, j, i]
                    for c in range(n_channels):
                        acc += f[b, t, c] * weight[i, c, j]
                out[b, s, j] = acc
    return out


def patch_reduce_bwd_numpy(f, idx, weight, dy, df, dweight, dbias):
    n_batch = f.shape[0]
    n_channels = f.shape[2]
    gathered = f[:, idx, :]  # (B, S, J, p, K)
    dweight += np.einsum("bsjpk,bsj->pkj", gathered, dy)
    dbias += dy.sum(axis=(0, 1))
    # scatter df[b, idx[s,j,i], c] += dy[b,s,j] * weight[i,c,j]
    contrib = np.einsum("bsj,pkj->bsjpk", dy, weight)
    flat_idx = idx.reshape(-1)
    flat = contrib.reshape(n_batch, flat_idx.size, n_channels)
    np.add.at(df, (np.arange(n_batch)[:, None], flat_idx[None, :]), flat)
    return df, dweight, dbias


@njit(cache=True)
def patch_reduce_bwd_numba(f, idx, weight, dy, df, dweight, dbias):
    n_batch = f.shape[0]
    n_channels = f.shape[2]
    n_steps, n_patches, patch_size = idx.shape
    for b in range(n_batch):
        for s in range(n_steps):
            for j in range(n_patches):
                g = dy[b, s, j]
                dbias[j] += g
                for i in range(patch_size):
                    t = idx[s, j, i]
                    for c in range(n_channels):
                        dweight[i, c, j] += f[b, t, c] * g
                        df[b, t, c] += weight[i, c, j] * g
    return df, dweight, dbias


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_IMPLS = {
    "numpy": {
        "conv1d_fwd": conv1d_fwd_numpy,
        "conv1d_bwd": conv1d_bwd_numpy,
        "patch_reduce_fwd": patch_reduce_fwd_numpy,
        "patch_reduce_bwd": patch_reduce_bwd_numpy,
    },
    "numba": {
        "conv1d_fwd": conv1d_fwd_numba,
        "conv1d_bwd": conv1d_bwd_numba,
        "patch_reduce_fwd": patch_reduce_fwd_numba,
        "patch_reduce_bwd": patch_reduce_bwd_numba,
    },
}


def _impl(name):
    return _IMPLS[active_backend()][name]


def causal_conv1d(x, kernel, bias):
    """Forward causal conv: x (B,L,M), kernel (w,M,K), bias (K) -> (B,L,K)."""
    out = np.zeros(x.shape[:2] + (kernel.shape[2],), dtype=x.dtype)
    return _impl("conv1d_fwd")(x, kernel, bias, out)


def causal_conv1d_backward(x, kernel, dy):
    dx = np.zeros_like(x)
    dkernel = np.zeros_like(kernel)
    dbias = np.zeros(kernel.shape[2], dtype=kernel.dtype)
    return _impl("conv1d_bwd")(x, kernel, dy, dx, dkernel, dbias)


def patch_reduce(f, idx, weight, bias):
    """Forward gather-reduce: f (B,L,K), idx (S,J,p), weight (p,K,J) -> (B,S,J)."""
    out = np.zeros((f.shape[0], idx.shape[0], idx.shape[1]), dtype=f.dtype)
    return _impl("patch_reduce_fwd")(f, idx, weight, bias, out)


def patch_reduce_backward(f, idx, weight, dy):
    df = np.zeros_like(f)
    dweight = np.zeros_like(weight)
    dbias = np.zeros(weight.shape[2], dtype=weight.dtype)
    return _impl("patch_reduce_bwd")(f, idx, weight, dy, df, dweight, dbias)

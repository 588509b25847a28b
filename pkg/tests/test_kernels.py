"""Kernel correctness: naive-loop oracles and numba/numpy backend parity."""

import numpy as np
import pytest

from igloo.backend import HAS_NUMBA, active_backend, set_backend
from igloo.kernels import (
    causal_conv1d,
    causal_conv1d_backward,
    patch_reduce,
    patch_reduce_backward,
)


def conv_oracle(x, kernel, bias):
    B, L, M = x.shape
    w, _, K = kernel.shape
    out = np.zeros((B, L, K))
    for b in range(B):
        for t in range(L):
            acc = bias.copy()
            for i in range(w):
                src = t - (w - 1) + i
                if src >= 0:
                    acc = acc + x[b, src] @ kernel[i]
            out[b, t] = acc
    return out


def patch_oracle(f, idx, weight, bias):
    B = f.shape[0]
    S, J, p = idx.shape
    out = np.zeros((B, S, J))
    for b in range(B):
        for s in range(S):
            for j in range(J):
                rows = f[b, idx[s, j]]          # (p, K)
                out[b, s, j] = np.sum(rows * weight[:, :, j]) + bias[j]
    return out


def make_case(rng, B=3, L=11, M=4, K=5, w=3, S=2, J=6, p=2):
    x = rng.normal(size=(B, L, M))
    kernel = rng.normal(size=(w, M, K))
    kbias = rng.normal(size=K)
    idx = rng.integers(0, L, size=(S, J, p))
    weight = rng.normal(size=(p, K, J))
    wbias = rng.normal(size=J)
    return x, kernel, kbias, idx, weight, wbias


@pytest.fixture(params=["numpy"] + (["numba"] if HAS_NUMBA else []))
def backend(request):
    prior = active_backend()
    set_backend(request.param)
    yield request.param
    set_backend(prior)


def test_conv_matches_naive_loop(backend, rng):
    x, kernel, kbias, *_ = make_case(rng)
    got = causal_conv1d(x, kernel, kbias)
    want = conv_oracle(x, kernel, kbias)
    assert np.abs(got - want).max() < 1e-12


def test_conv_causality(backend, rng):
    # changing x at time t must not change outputs before t
    x, kernel, kbias, *_ = make_case(rng)
    base = causal_conv1d(x, kernel, kbias)
    x2 = x.copy()
    x2[:, 7, :] += 100.0
    bumped = causal_conv1d(x2, kernel, kbias)
    assert np.array_equal(base[:, :7], bumped[:, :7])
    assert not np.allclose(base[:, 7:], bumped[:, 7:])


def test_conv_width_one_is_pointwise(backend, rng):
    x = rng.normal(size=(2, 6, 3))
    kernel = rng.normal(size=(1, 3, 4))
    bias = rng.normal(size=4)
    got = causal_conv1d(x, kernel, bias)
    assert np.allclose(got, x @ kernel[0] + bias)


def test_conv_backward_matches_finite_differences(backend, rng):
    x, kernel, kbias, *_ = make_case(rng, B=2, L=6, M=3, K=2)
    dy = rng.normal(size=(2, 6, 2))
    dx, dk, db = causal_conv1d_backward(x, kernel, dy)
    h = 1e-6

    def loss(xv, kv, bv):
        return float(np.sum(causal_conv1d(xv, kv, bv) * dy))

    for arr, grad in ((x, dx), (kernel, dk), (kbias, db)):
        flat = arr.reshape(-1)
        for i in range(0, flat.size, max(1, flat.size // 5)):
            orig = flat[i]
            flat[i] = orig + h
            up = loss(x, kernel, kbias)
            flat[i] = orig - h
            down = loss(x, kernel, kbias)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            assert abs(grad.reshape(-1)[i] - numeric) < 1e-5


def test_patch_reduce_matches_naive_loop(backend, rng):
    x, kernel, kbias, idx, weight, wbias = make_case(rng)
    f = causal_conv1d(x, kernel, kbias)
    got = patch_reduce(f, idx, weight, wbias)
    want = patch_oracle(f, idx, weight, wbias)
    assert np.abs(got - want).max() < 1e-12


def test_patch_reduce_backward_accumulates_duplicates(backend, rng):
    # all patch rows point at time 0: df must hold the summed contributions
    f = rng.normal(size=(1, 5, 2))
    idx = np.zeros((1, 3, 2), dtype=np.int64)
    weight = rng.normal(size=(2, 2, 3))
    dy = rng.normal(size=(1, 1, 3))
    df, dw, db = patch_reduce_backward(f, idx, weight, dy)
    want_row = sum(dy[0, 0, j] * weight[i, :, j] for j in range(3) for i in range(2))
    assert np.allclose(df[0, 0], want_row)
    assert np.allclose(df[0, 1:], 0.0)
    assert np.allclose(db, dy[0, 0])


def test_backends_agree(rng):
    if not HAS_NUMBA:
        pytest.skip("numba not importable")
    x, kernel, kbias, idx, weight, wbias = make_case(rng, B=4, L=23, M=3, K=6, S=5, J=9, p=3)
    dy_c = rng.normal(size=(4, 23, 6))
    dy_p = rng.normal(size=(4, 5, 9))
    results = {}
    prior = active_backend()
    try:
        for name in ("numpy", "numba"):
            set_backend(name)
            f = causal_conv1d(x, kernel, kbias)
            results[name] = (
                f,
                patch_reduce(f, idx, weight, wbias),
                causal_conv1d_backward(x, kernel, dy_c),
                patch_reduce_backward(f, idx, weight, dy_p),
            )
    finally:
        set_backend(prior)
    for a, b in zip(results["numpy"], results["numba"]):
        if isinstance(a, tuple):
            for ai, bi in zip(a, b):
                assert np.abs(ai - bi).max() < 1e-12
        else:
            assert np.abs(a - b).max() < 1e-12


def test_kernels_are_deterministic(backend, rng):
    x, kernel, kbias, idx, weight, wbias = make_case(rng)
    f1 = causal_conv1d(x, kernel, kbias)
    o1 = patch_reduce(f1, idx, weight, wbias)
    f2 = causal_conv1d(x, kernel, kbias)
    o2 = patch_reduce(f2, idx, weight, wbias)
    assert np.array_equal(f1, f2)
    assert np.array_equal(o1, o2)

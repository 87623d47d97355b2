"""Compiled extension vs numpy fallback vs the naive oracles.

Backward passes are compared on integer-valued tensors so that sums are
exact regardless of accumulation order; forward pooling is required to be
bit-identical, convolution only float-equal (summation order differs).
"""

import os

import numpy as np
import pytest

from hashlab._kernels import BACKEND, _fallback
from hashlab.index import pack_many

from .oracles import avgpool_naive, conv2d_naive, hamming_naive, maxpool_naive

try:
    from hashlab._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def test_backend_reported():
    assert BACKEND in ("compiled", "fallback")
    if os.environ.get("HASHLAB_NO_EXT"):
        assert BACKEND == "fallback"
    elif _core is not None:
        assert BACKEND == "compiled"


def _conv_case(rng):
    n, c, f = (int(rng.integers(1, 4)) for _ in range(3))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    h = int(rng.integers(k, k + 5))
    w = int(rng.integers(k, k + 5))
    xp = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((f, c, k, k))
    b = rng.standard_normal(f)
    return xp, wt, b, stride


def _pool_case(rng, ints=False):
    n, c = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, k + 1))
    pad = int(rng.integers(0, k))
    h = int(rng.integers(k, k + 6))
    w = int(rng.integers(k, k + 6))
    oh = -(-(h + 2 * pad - k) // stride) + 1
    ow = -(-(w + 2 * pad - k) // stride) + 1
    if ints:
        x = rng.integers(-3, 4, size=(n, c, h, w)).astype(np.float64)  # frequent ties
    else:
        x = rng.standard_normal((n, c, h, w))
    return x, k, stride, pad, oh, ow


def test_fallback_conv_matches_naive():
    rng = np.random.default_rng(0)
    for _ in range(6):
        xp, w, b, stride = _conv_case(rng)
        got = _fallback.conv2d_forward(xp, w, b, stride)
        want = conv2d_naive(xp, w, b, stride, 0, "floor")
        assert np.allclose(got, want, rtol=1e-12, atol=1e-13)


def test_fallback_pools_match_naive():
    rng = np.random.default_rng(1)
    for _ in range(6):
        x, k, stride, pad, oh, ow = _pool_case(rng, ints=True)
        y, arg = _fallback.maxpool_forward(x, k, stride, pad, oh, ow)
        wy, warg = maxpool_naive(x, k, stride, pad)
        assert np.array_equal(y, wy) and np.array_equal(arg, warg)
        a = _fallback.avgpool_forward(x, k, stride, pad, oh, ow)
        wa = avgpool_naive(x, k, stride, pad)
        assert np.allclose(a, wa, rtol=1e-13, atol=1e-14)


@needs_core
def test_conv_forward_backends_agree():
    rng = np.random.default_rng(2)
    for _ in range(8):
        xp, w, b, stride = _conv_case(rng)
        a = _core.conv2d_forward(xp, w, b, stride)
        f = _fallback.conv2d_forward(xp, w, b, stride)
        assert np.allclose(a, f, rtol=1e-12, atol=1e-13)
    x32, w32, b32 = xp.astype(np.float32), w.astype(np.float32), b.astype(np.float32)
    a = _core.conv2d_forward(x32, w32, b32, stride)
    f = _fallback.conv2d_forward(x32, w32, b32, stride)
    assert a.dtype == np.float32
    assert np.allclose(a, f, rtol=1e-4, atol=1e-5)


@needs_core
def test_conv_backward_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(8):
        xp, w, b, stride = _conv_case(rng)
        oh = (xp.shape[2] - w.shape[2]) // stride + 1
        ow = (xp.shape[3] - w.shape[3]) // stride + 1
        gy = rng.standard_normal((xp.shape[0], w.shape[0], oh, ow))
        ax, aw, ab = _core.conv2d_backward(xp, w, gy, stride)
        fx, fw, fb = _fallback.conv2d_backward(xp, w, gy, stride)
        assert np.allclose(ax, fx, rtol=1e-12, atol=1e-13)
        assert np.allclose(aw, fw, rtol=1e-12, atol=1e-13)
        assert np.allclose(ab, fb, rtol=1e-12, atol=1e-13)


@needs_core
def test_pool_forward_backends_bit_identical():
    rng = np.random.default_rng(4)
    for trial in range(10):
        x, k, stride, pad, oh, ow = _pool_case(rng, ints=(trial % 2 == 0))
        ay, aarg = _core.maxpool_forward(x, k, stride, pad, oh, ow)
        fy, farg = _fallback.maxpool_forward(x, k, stride, pad, oh, ow)
        assert np.array_equal(ay, fy)
        assert np.array_equal(aarg, farg)  # same tie-breaking
        assert np.array_equal(
            _core.avgpool_forward(x, k, stride, pad, oh, ow),
            _fallback.avgpool_forward(x, k, stride, pad, oh, ow),
        )


@needs_core
def test_pool_backward_backends_agree():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x, k, stride, pad, oh, ow = _pool_case(rng)
        h, w = x.shape[2], x.shape[3]
        # integer gradients make the scatter-sum order irrelevant
        gy = rng.integers(-5, 6, size=(x.shape[0], x.shape[1], oh, ow)).astype(np.float64)
        _, arg = _fallback.maxpool_forward(x, k, stride, pad, oh, ow)
        assert np.array_equal(
            _core.maxpool_backward(gy, arg, h, w),
            _fallback.maxpool_backward(gy, arg, h, w),
        )
        assert np.allclose(
            _core.avgpool_backward(gy, k, stride, pad, h, w),
            _fallback.avgpool_backward(gy, k, stride, pad, h, w),
            rtol=1e-13, atol=1e-14,
        )


@needs_core
def test_hamming_backends_agree():
    rng = np.random.default_rng(6)
    for q in (12, 48, 64, 128):
        qbits = rng.integers(0, 2, size=(1, q)).astype(np.uint8)
        dbits = rng.integers(0, 2, size=(500, q)).astype(np.uint8)
        qw = pack_many(qbits)[0]
        dw = pack_many(dbits)
        a = _core.hamming_distances(qw, dw)
        f = _fallback.hamming_distances(qw, dw)
        assert a.dtype == np.int64 and np.array_equal(a, f)
        for i in (0, 250, 499):
            assert int(a[i]) == hamming_naive(qbits[0], dbits[i])
"""Numpy implementations of the hot-loop kernels.

These are the reference semantics for the compiled extension and the
backend of last resort when it is unavailable.  Pooling results (values
and argmax indices) are bit-identical to the compiled kernels; the
convolutions may differ by floating-point summation order only.

Conventions shared by both backends:

* convolution operates on a pre-padded input and is always "valid",
* pooling windows are clipped to the input; padding only shifts the
  window grid, it never contributes values,
* average pooling divides by the full window area ``k*k`` regardless of
  clipping,
* max pooling ties resolve to the first maximum in row-major window
  order.
"""

import numpy as np


def _window_view(xp, kh, kw, stride, oh, ow):
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )


def conv2d_forward(xp, w, b, stride):
    """Valid convolution of a padded batch ``xp`` (N,C,H,W) with ``w`` (F,C,kh,kw)."""
    f, _, kh, kw = w.shape
    oh = (xp.shape[2] - kh) // stride + 1
    ow = (xp.shape[3] - kw) // stride + 1
    cols = _window_view(xp, kh, kw, stride, oh, ow)
    y = np.einsum("ncijuv,fcuv->nfij", cols, w, optimize=True)
    y += b[None, :, None, None]
    return y


def conv2d_backward(xp, w, gy, stride):
    """Gradients of :func:`conv2d_forward` w.r.t. padded input, weights, bias."""
    f, _, kh, kw = w.shape
    oh, ow = gy.shape[2], gy.shape[3]
    cols = _window_view(xp, kh, kw, stride, oh, ow)
    gw = np.einsum("nfij,ncijuv->fcuv", gy, cols, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    gx = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            # One kernel tap: every output cell maps to a distinct input cell,
            # so a strided slice-add is safe.
            gx[:, :, u : u + oh * stride : stride, v : v + ow * stride : stride] += np.einsum(
                "nfij,fc->ncij", gy, w[:, :, u, v], optimize=True
            )
    return gx, gw, gb


def _tap_span(size, stride, pad, offset, out):
    """Output index range [ia, ib) whose window tap ``offset`` lands inside the input."""
    ia = max(0, -(-(pad - offset) // stride))
    ib = min(out, (size - 1 + pad - offset) // stride + 1)
    return ia, ib


def maxpool_forward(x, k, stride, pad, oh, ow):
    n, c, h, w = x.shape
    y = np.full((n, c, oh, ow), -np.inf, dtype=x.dtype)
    arg = np.zeros((n, c, oh, ow), dtype=np.int64)
    for u in range(k):
        ia, ib = _tap_span(h, stride, pad, u, oh)
        if ia >= ib:
            continue
        ra = ia * stride - pad + u
        for v in range(k):
            ja, jb = _tap_span(w, stride, pad, v, ow)
            if ja >= jb:
                continue
            ca = ja * stride - pad + v
            t = x[:, :, ra : ra + (ib - ia) * stride : stride, ca : ca + (jb - ja) * stride : stride]
            lin = (
                np.arange(ra, ra + (ib - ia) * stride, stride, dtype=np.int64)[:, None] * w
                + np.arange(ca, ca + (jb - ja) * stride, stride, dtype=np.int64)[None, :]
            )
            cur = y[:, :, ia:ib, ja:jb]
            better = t > cur
            y[:, :, ia:ib, ja:jb] = np.where(better, t, cur)
            arg[:, :, ia:ib, ja:jb] = np.where(better, lin[None, None], arg[:, :, ia:ib, ja:jb])
    return y, arg


def maxpool_backward(gy, arg, h, w):
    n, c, oh, ow = gy.shape
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    ni = np.arange(n)[:, None, None]
    ci = np.arange(c)[None, :, None]
    np.add.at(gx, (ni, ci, arg.reshape(n, c, -1)), gy.reshape(n, c, -1))
    return gx.reshape(n, c, h, w)


def avgpool_forward(x, k, stride, pad, oh, ow):
    n, c, h, w = x.shape
    y = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for u in range(k):
        ia, ib = _tap_span(h, stride, pad, u, oh)
        if ia >= ib:
            continue
        ra = ia * stride - pad + u
        for v in range(k):
            ja, jb = _tap_span(w, stride, pad, v, ow)
            if ja >= jb:
                continue
            ca = ja * stride - pad + v
            y[:, :, ia:ib, ja:jb] += x[
                :, :, ra : ra + (ib - ia) * stride : stride, ca : ca + (jb - ja) * stride : stride
            ]
    y /= k * k
    return y


def avgpool_backward(gy, k, stride, pad, h, w):
    n, c, oh, ow = gy.shape
    g = gy / (k * k)
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    for u in range(k):
        ia, ib = _tap_span(h, stride, pad, u, oh)
        if ia >= ib:
            continue
        ra = ia * stride - pad + u
        for v in range(k):
            ja, jb = _tap_span(w, stride, pad, v, ow)
            if ja >= jb:
                continue
            ca = ja * stride - pad + v
            gx[
                :, :, ra : ra + (ib - ia) * stride : stride, ca : ca + (jb - ja) * stride : stride
            ] += g[:, :, ia:ib, ja:jb]
    return gx


def hamming_distances(query_words, db_words):
    """Hamming distances from one packed code to every row of ``db_words``.

    query_words: (W,) uint64, db_words: (n, W) uint64 -> (n,) int64.
    """
    x = np.bitwise_xor(db_words, query_words[None, :])
    return np.bitwise_count(x).sum(axis=1, dtype=np.int64)

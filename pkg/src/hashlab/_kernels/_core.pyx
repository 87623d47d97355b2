# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot-loop kernels.

Semantics match hashlab._kernels._fallback: valid convolution over a
pre-padded input, clipped pooling windows with full-area averaging,
first-maximum tie-breaking, and popcount Hamming scans.
"""

import numpy as np

from libc.math cimport INFINITY
from libc.stdint cimport int64_t, uint64_t

ctypedef fused real:
    float
    double


cdef inline uint64_t _popcount(uint64_t v) noexcept nogil:
    v = v - ((v >> 1) & 0x5555555555555555UL)
    v = (v & 0x3333333333333333UL) + ((v >> 2) & 0x3333333333333333UL)
    v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0FUL
    return (v * 0x0101010101010101UL) >> 56


def conv2d_forward(real[:, :, :, ::1] xp, real[:, :, :, ::1] w, real[::1] b, int stride):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1], h = xp.shape[2], wd = xp.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h - kh) // stride + 1, ow = (wd - kw) // stride + 1
    if real is double:
        y = np.empty((n, f, oh, ow), dtype=np.float64)
    else:
        y = np.empty((n, f, oh, ow), dtype=np.float32)
    cdef real[:, :, :, ::1] yv = y
    cdef Py_ssize_t nn, ff, i, j, cc, u, v, r0, c0
    cdef real acc
    with nogil:
        for nn in range(n):
            for ff in range(f):
                for i in range(oh):
                    r0 = i * stride
                    for j in range(ow):
                        c0 = j * stride
                        acc = b[ff]
                        for cc in range(c):
                            for u in range(kh):
                                for v in range(kw):
                                    acc = acc + xp[nn, cc, r0 + u, c0 + v] * w[ff, cc, u, v]
                        yv[nn, ff, i, j] = acc
    return y


def conv2d_backward(real[:, :, :, ::1] xp, real[:, :, :, ::1] w, real[:, :, :, ::1] gy, int stride):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1], h = xp.shape[2], wd = xp.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    if real is double:
        dt = np.float64
    else:
        dt = np.float32
    gx = np.zeros((n, c, h, wd), dtype=dt)
    gw = np.zeros((f, c, kh, kw), dtype=dt)
    gb = np.zeros(f, dtype=dt)
    cdef real[:, :, :, ::1] gxv = gx
    cdef real[:, :, :, ::1] gwv = gw
    cdef real[::1] gbv = gb
    cdef Py_ssize_t nn, ff, i, j, cc, u, v, r0, c0
    cdef real g
    with nogil:
        for nn in range(n):
            for ff in range(f):
                for i in range(oh):
                    r0 = i * stride
                    for j in range(ow):
                        c0 = j * stride
                        g = gy[nn, ff, i, j]
                        gbv[ff] = gbv[ff] + g
                        for cc in range(c):
                            for u in range(kh):
                                for v in range(kw):
                                    gwv[ff, cc, u, v] = gwv[ff, cc, u, v] + xp[nn, cc, r0 + u, c0 + v] * g
                                    gxv[nn, cc, r0 + u, c0 + v] = gxv[nn, cc, r0 + u, c0 + v] + w[ff, cc, u, v] * g
    return gx, gw, gb


def maxpool_forward(real[:, :, :, ::1] x, int k, int stride, int pad, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if real is double:
        y = np.empty((n, c, oh, ow), dtype=np.float64)
    else:
        y = np.empty((n, c, oh, ow), dtype=np.float32)
    arg = np.zeros((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] yv = y
    cdef int64_t[:, :, :, ::1] av = arg
    cdef Py_ssize_t nn, cc, i, j, u, v, r, cl
    cdef real best, val
    cdef int64_t pos
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(oh):
                    for j in range(ow):
                        best = -INFINITY
                        pos = 0
                        for u in range(k):
                            r = i * stride - pad + u
                            if r < 0 or r >= h:
                                continue
                            for v in range(k):
                                cl = j * stride - pad + v
                                if cl < 0 or cl >= w:
                                    continue
                                val = x[nn, cc, r, cl]
                                if val > best:
                                    best = val
                                    pos = r * w + cl
                        yv[nn, cc, i, j] = best
                        av[nn, cc, i, j] = pos
    return y, arg


def maxpool_backward(real[:, :, :, ::1] gy, int64_t[:, :, :, ::1] arg, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = gy.shape[0], c = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    if real is double:
        gx = np.zeros((n, c, h, w), dtype=np.float64)
    else:
        gx = np.zeros((n, c, h, w), dtype=np.float32)
    cdef real[:, :, :, ::1] gv = gx
    cdef Py_ssize_t nn, cc, i, j
    cdef int64_t pos
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(oh):
                    for j in range(ow):
                        pos = arg[nn, cc, i, j]
                        gv[nn, cc, pos // w, pos % w] = gv[nn, cc, pos // w, pos % w] + gy[nn, cc, i, j]
    return gx


def avgpool_forward(real[:, :, :, ::1] x, int k, int stride, int pad, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if real is double:
        y = np.empty((n, c, oh, ow), dtype=np.float64)
    else:
        y = np.empty((n, c, oh, ow), dtype=np.float32)
    cdef real[:, :, :, ::1] yv = y
    cdef Py_ssize_t nn, cc, i, j, u, v, r, cl
    cdef real acc, area
    area = <real> (k * k)
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(oh):
                    for j in range(ow):
                        acc = 0
                        for u in range(k):
                            r = i * stride - pad + u
                            if r < 0 or r >= h:
                                continue
                            for v in range(k):
                                cl = j * stride - pad + v
                                if cl < 0 or cl >= w:
                                    continue
                                acc = acc + x[nn, cc, r, cl]
                        yv[nn, cc, i, j] = acc / area
    return y


def avgpool_backward(real[:, :, :, ::1] gy, int k, int stride, int pad, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = gy.shape[0], c = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    if real is double:
        gx = np.zeros((n, c, h, w), dtype=np.float64)
    else:
        gx = np.zeros((n, c, h, w), dtype=np.float32)
    cdef real[:, :, :, ::1] gv = gx
    cdef Py_ssize_t nn, cc, i, j, u, v, r, cl
    cdef real g, area
    area = <real> (k * k)
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(oh):
                    for j in range(ow):
                        g = gy[nn, cc, i, j] / area
                        for u in range(k):
                            r = i * stride - pad + u
                            if r < 0 or r >= h:
                                continue
                            for v in range(k):
                                cl = j * stride - pad + v
                                if cl < 0 or cl >= w:
                                    continue
                                gv[nn, cc, r, cl] = gv[nn, cc, r, cl] + g
    return gx


def hamming_distances(query_words, db_words):
    cdef uint64_t[::1] q = np.ascontiguousarray(query_words, dtype=np.uint64)
    cdef uint64_t[:, ::1] db = np.ascontiguousarray(db_words, dtype=np.uint64)
    cdef Py_ssize_t n = db.shape[0], nw = db.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef Py_ssize_t i, j
    cdef uint64_t acc
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(nw):
                acc += _popcount(db[i, j] ^ q[j])
            ov[i] = <int64_t> acc
    return out

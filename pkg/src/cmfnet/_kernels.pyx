# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im kernels (float32 and float64 via fused types)."""

import numpy as np
from cython cimport floating


cdef inline void _valid_range(Py_ssize_t n_out, Py_ssize_t n_in, Py_ssize_t offset,
                              Py_ssize_t stride, Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output indices o with 0 <= o*stride + offset < n_in
    cdef Py_ssize_t a = 0, b = n_out
    while a < n_out and a * stride + offset < 0:
        a += 1
    while b > a and (b - 1) * stride + offset >= n_in:
        b -= 1
    lo[0] = a
    hi[0] = b


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((B, C * kh * kw, Ho * Wo), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t b, c, i, j, oy, ox, oy_lo, oy_hi, ox_lo, ox_hi, row
    cdef floating* dst
    cdef floating* src
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    _valid_range(Ho, H, i - pad, stride, &oy_lo, &oy_hi)
                    for j in range(kw):
                        _valid_range(Wo, W, j - pad, stride, &ox_lo, &ox_hi)
                        row = (c * kh + i) * kw + j
                        for oy in range(oy_lo, oy_hi):
                            dst = &cols[b, row, oy * Wo]
                            src = &x[b, c, oy * stride + i - pad, 0]
                            if stride == 1:
                                src = src + (j - pad)
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox] = src[ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox] = src[ox * stride + j - pad]
    return out


def col2im(floating[:, :, ::1] cols, shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t B = shape[0], C = shape[1], H = shape[2], W = shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((B, C, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] x = out
    cdef Py_ssize_t b, c, i, j, oy, ox, oy_lo, oy_hi, ox_lo, ox_hi, row
    cdef floating* dst
    cdef floating* src
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    _valid_range(Ho, H, i - pad, stride, &oy_lo, &oy_hi)
                    for j in range(kw):
                        _valid_range(Wo, W, j - pad, stride, &ox_lo, &ox_hi)
                        row = (c * kh + i) * kw + j
                        for oy in range(oy_lo, oy_hi):
                            src = &cols[b, row, oy * Wo]
                            dst = &x[b, c, oy * stride + i - pad, 0]
                            if stride == 1:
                                dst = dst + (j - pad)
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox] += src[ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox * stride + j - pad] += src[ox]
    return out

"""Compiled versions of the hot kernels.

Semantics match :mod:`qpbench.kernels.numpy_backend` exactly (including the
first-occurrence tie break in max pooling); only the inner loops differ.
Inputs must be C-contiguous float64, which :mod:`qpbench.ops` guarantees.
"""

import numpy as np

name = "cython"


def conv2d_forward(const double[:, :, ::1] x, const double[:, :, :, ::1] w, const double[::1] b):
    cdef Py_ssize_t c_out = w.shape[0], c_in = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = x.shape[1] - kh + 1, ow = x.shape[2] - kw + 1
    out_arr = np.empty((c_out, oh, ow), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, y, z, i, j
    cdef double acc
    for o in range(c_out):
        for y in range(oh):
            for z in range(ow):
                acc = b[o]
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            acc += x[c, y + i, z + j] * w[o, c, i, j]
                out[o, y, z] = acc
    return out_arr


def conv2d_backward(const double[:, :, ::1] x, const double[:, :, :, ::1] w, const double[:, :, ::1] gy):
    cdef Py_ssize_t c_out = w.shape[0], c_in = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[1], ow = gy.shape[2]
    gx_arr = np.zeros((x.shape[0], x.shape[1], x.shape[2]), dtype=np.float64)
    gw_arr = np.zeros((c_out, c_in, kh, kw), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t o, c, y, z, i, j
    cdef double g
    for o in range(c_out):
        for y in range(oh):
            for z in range(ow):
                g = gy[o, y, z]
                gb[o] += g
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            gw[o, c, i, j] += x[c, y + i, z + j] * g
                            gx[c, y + i, z + j] += w[o, c, i, j] * g
    return gx_arr, gw_arr, gb_arr


def maxpool2x2_forward(const double[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    out_arr = np.empty((c, oh, ow), dtype=np.float64)
    mask_arr = np.empty((c, oh, ow), dtype=np.uint8)
    cdef double[:, :, ::1] out = out_arr
    cdef unsigned char[:, :, ::1] mask = mask_arr
    cdef Py_ssize_t ch, y, z, i, j, best
    cdef double top, cur
    for ch in range(c):
        for y in range(oh):
            for z in range(ow):
                best = 0
                top = x[ch, 2 * y, 2 * z]
                for i in range(2):
                    for j in range(2):
                        cur = x[ch, 2 * y + i, 2 * z + j]
                        if cur > top:
                            top = cur
                            best = 2 * i + j
                out[ch, y, z] = top
                mask[ch, y, z] = <unsigned char> best
    return out_arr, mask_arr


def maxpool2x2_backward(const unsigned char[:, :, ::1] mask, const double[:, :, ::1] gy):
    cdef Py_ssize_t c = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2]
    gx_arr = np.zeros((c, oh * 2, ow * 2), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t ch, y, z, m
    for ch in range(c):
        for y in range(oh):
            for z in range(ow):
                m = mask[ch, y, z]
                gx[ch, 2 * y + m // 2, 2 * z + m % 2] = gy[ch, y, z]
    return gx_arr


def upsample_forward(const double[:, :, ::1] x, Py_ssize_t factor):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((c, h * factor, w * factor), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ch, y, z
    for ch in range(c):
        for y in range(h * factor):
            for z in range(w * factor):
                out[ch, y, z] = x[ch, y // factor, z // factor]
    return out_arr


def upsample_backward(const double[:, :, ::1] gy, Py_ssize_t factor):
    cdef Py_ssize_t c = gy.shape[0], h = gy.shape[1], w = gy.shape[2]
    cdef Py_ssize_t oh = h // factor, ow = w // factor
    gx_arr = np.zeros((c, oh, ow), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t ch, y, z
    for ch in range(c):
        for y in range(h):
            for z in range(w):
                gx[ch, y // factor, z // factor] += gy[ch, y, z]
    return gx_arr

"""Numpy implementations of the hot kernels.

This is the fallback used when the compiled extension is unavailable. The
convolutions loop over kernel taps and vectorize over output pixels, which
keeps them direct (no FFT or im2col tricks) while staying fast enough for
desk-scale runs. Shape checking lives in :mod:`qpbench.ops`, not here.
"""

import numpy as np

name = "numpy"


def conv2d_forward(x, w, b):
    """Valid cross-correlation of x[Cin,H,W] with w[Cout,Cin,Kh,Kw] plus bias."""
    c_out, c_in, kh, kw = w.shape
    oh = x.shape[1] - kh + 1
    ow = x.shape[2] - kw + 1
    if oh == 1 and ow == 1:
        # input exactly as large as the kernels (the patch-training hot
        # path): one matrix-vector contraction instead of a tap loop
        return (w.reshape(c_out, -1) @ x.ravel() + b)[:, None, None]
    out = np.empty((c_out, oh, ow), dtype=np.float64)
    out[:] = b[:, None, None]
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(w[:, :, i, j], x[:, i : i + oh, j : j + ow], axes=1)
    return out


def conv2d_backward(x, w, gy):
    """Gradients of a scalar loss through conv2d_forward.

    Returns (grad_input, grad_kernels, grad_bias) for upstream gradient
    gy[Cout,OH,OW].
    """
    c_out, c_in, kh, kw = w.shape
    oh, ow = gy.shape[1], gy.shape[2]
    if oh == 1 and ow == 1 and x.shape[1] == kh and x.shape[2] == kw:
        g = gy.ravel()
        gw = np.outer(g, x.ravel()).reshape(w.shape)
        gx = (w.reshape(c_out, -1).T @ g).reshape(x.shape)
        return gx, gw, g.copy()
    gx = np.zeros_like(x)
    gw = np.empty_like(w)
    gb = gy.sum(axis=(1, 2))
    for i in range(kh):
        for j in range(kw):
            patch = x[:, i : i + oh, j : j + ow]
            gw[:, :, i, j] = np.tensordot(gy, patch, axes=([1, 2], [1, 2]))
            gx[:, i : i + oh, j : j + ow] += np.tensordot(w[:, :, i, j].T, gy, axes=1)
    return gx, gw, gb


def maxpool2x2_forward(x):
    """2x2 max pooling. Returns (output, mask).

    mask[c,y,x] is the row-major index (0..3) of the window maximum; ties go
    to the first occurrence so the backward pass is deterministic.
    """
    c, h, w = x.shape
    windows = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    flat = windows.reshape(c, h // 2, w // 2, 4)
    mask = flat.argmax(axis=3).astype(np.uint8)
    out = np.take_along_axis(flat, mask[..., None].astype(np.intp), axis=3)[..., 0]
    return np.ascontiguousarray(out), mask


def maxpool2x2_backward(mask, gy):
    """Route gy back to the argmax position of each 2x2 window."""
    c, oh, ow = gy.shape
    flat = np.zeros((c, oh, ow, 4), dtype=np.float64)
    np.put_along_axis(flat, mask[..., None].astype(np.intp), gy[..., None], axis=3)
    gx = flat.reshape(c, oh, ow, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, oh * 2, ow * 2)
    return np.ascontiguousarray(gx)


def upsample_forward(x, factor):
    """Nearest-neighbor upsampling by an integer factor."""
    return np.ascontiguousarray(np.repeat(np.repeat(x, factor, axis=1), factor, axis=2))


def upsample_backward(gy, factor):
    """Sum each factor x factor block of gy."""
    c, h, w = gy.shape
    oh, ow = h // factor, w // factor
    return gy.reshape(c, oh, factor, ow, factor).sum(axis=(2, 4))

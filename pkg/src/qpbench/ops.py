"""Low-level tensor ops: valid cross-correlation, 2x2 max pooling and
nearest-neighbor upsampling, forward and backward.

Tensors are plain C-contiguous float64 numpy arrays in [channels, height,
width] layout. This module owns argument validation; the arithmetic lives in
the selected kernel backend.
"""

import numpy as np

from .errors import DimensionError, ParameterError
from .kernels import active as _k


def as_tensor(values) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def conv2d_forward(x, kernels, bias) -> np.ndarray:
    """Cross-correlate x[Cin,H,W] with kernels[Cout,Cin,Kh,Kw], valid padding,
    and add a per-output-channel bias. Output is [Cout, H-Kh+1, W-Kw+1]."""
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if x.ndim != 3 or kernels.ndim != 4 or bias.ndim != 1:
        raise DimensionError(
            f"expected input[C,H,W], kernels[O,C,Kh,Kw], bias[O]; got "
            f"{x.shape}, {kernels.shape}, {bias.shape}"
        )
    if kernels.shape[1] != x.shape[0]:
        raise DimensionError(
            f"kernel input-channel axis {kernels.shape[1]} != input channel axis {x.shape[0]}"
        )
    if bias.shape[0] != kernels.shape[0]:
        raise DimensionError(
            f"bias length {bias.shape[0]} != kernel output-channel axis {kernels.shape[0]}"
        )
    if kernels.shape[2] > x.shape[1] or kernels.shape[3] > x.shape[2]:
        raise DimensionError(
            f"kernel {kernels.shape[2]}x{kernels.shape[3]} larger than input "
            f"{x.shape[1]}x{x.shape[2]}"
        )
    return _k.conv2d_forward(x, kernels, bias)


def conv2d_backward(x, kernels, grad_out):
    """Backward pass of :func:`conv2d_forward`.

    Returns (grad_input, grad_kernels, grad_bias) for the upstream gradient
    grad_out, which must have the forward output's shape.
    """
    x, kernels, grad_out = as_tensor(x), as_tensor(kernels), as_tensor(grad_out)
    expected = (
        kernels.shape[0],
        x.shape[1] - kernels.shape[2] + 1,
        x.shape[2] - kernels.shape[3] + 1,
    )
    if kernels.shape[1] != x.shape[0]:
        raise DimensionError(
            f"kernel input-channel axis {kernels.shape[1]} != input channel axis {x.shape[0]}"
        )
    if grad_out.shape != expected:
        raise DimensionError(f"grad_out shape {grad_out.shape} != forward output {expected}")
    return _k.conv2d_backward(x, kernels, grad_out)


def maxpool2x2(x):
    """2x2 max pooling of x[C,H,W] with even H and W.

    Returns (output, argmax_mask); the mask holds the row-major in-window
    index (0..3) of each maximum and drives :func:`maxpool2x2_backward`.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"expected input[C,H,W], got shape {x.shape}")
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise DimensionError(f"height and width must be even, got {x.shape[1]}x{x.shape[2]}")
    return _k.maxpool2x2_forward(x)


def maxpool2x2_backward(mask, grad_out):
    """Scatter grad_out back through the pooling windows recorded in mask."""
    grad_out = as_tensor(grad_out)
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if mask.shape != grad_out.shape:
        raise DimensionError(f"mask shape {mask.shape} != grad_out shape {grad_out.shape}")
    return _k.maxpool2x2_backward(mask, grad_out)


def upsample_nn(x, factor: int):
    """Nearest-neighbor upsampling of x[C,H,W] by an integer factor >= 1."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"expected input[C,H,W], got shape {x.shape}")
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ParameterError(f"upsampling factor must be a positive integer, got {factor!r}")
    return _k.upsample_forward(x, int(factor))


def upsample_nn_backward(grad_out, factor: int):
    """Backward pass of :func:`upsample_nn`: sum each factor x factor block."""
    grad_out = as_tensor(grad_out)
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ParameterError(f"upsampling factor must be a positive integer, got {factor!r}")
    if grad_out.shape[1] % factor or grad_out.shape[2] % factor:
        raise DimensionError(
            f"grad_out spatial dims {grad_out.shape[1]}x{grad_out.shape[2]} "
            f"not divisible by factor {factor}"
        )
    return _k.upsample_backward(grad_out, int(factor))

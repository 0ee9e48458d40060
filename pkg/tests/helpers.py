"""Shared test utilities: the central finite-difference oracle and gradient
comparison with a relative tolerance plus an absolute floor for tiny
components."""

import numpy as np


def numerical_gradient(f, x, h=1e-5):
    """Central finite differences of scalar f at x, perturbing in place."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_gradients_match(analytic, numeric, rel=1e-6, tiny=1e-8):
    """Componentwise |a - n| <= tiny + rel * |n| (the np.allclose form):
    relative agreement for normal components, with an absolute floor where
    the component is too small for a relative comparison to mean anything."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    assert a.shape == n.shape
    for i in range(a.size):
        assert abs(a[i] - n[i]) <= tiny + rel * abs(n[i]), (
            f"component {i}: analytic {a[i]!r} vs numeric {n[i]!r}"
        )


def avgpool2x2(x):
    """2x2 average pooling, the inverse probe for nearest-neighbor upsampling."""
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))

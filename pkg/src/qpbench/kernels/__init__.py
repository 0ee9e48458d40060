"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback takes over. Set ``QPBENCH_KERNELS=numpy`` or ``=cython`` to force a
backend (forcing cython without the built extension is an error).
"""

import os

from . import numpy_backend

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"numpy": numpy_backend}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    """Name -> backend module, for tests and the benchmark."""
    return dict(_BACKENDS)


def _select():
    forced = os.environ.get("QPBENCH_KERNELS", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(
                f"QPBENCH_KERNELS={forced!r} but only {sorted(_BACKENDS)} are available"
            )
        return _BACKENDS[forced]
    return _BACKENDS.get("cython", numpy_backend)


active = _select()


def backend_name() -> str:
    return active.name

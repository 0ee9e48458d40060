"""Timing comparison of the available kernel backends.

Runs each hot kernel on representative shapes (a training patch, a full
evaluation image) against every backend and reports per-call times plus the
speedup over the numpy fallback.
"""

import time

import numpy as np

from .kernels import available_backends, backend_name


def _cases(quick: bool):
    rng = np.random.default_rng(7)
    patch = rng.standard_normal((1, 7, 7))
    patch_k = rng.standard_normal((2, 1, 7, 7))
    patch_b = rng.standard_normal(2)
    patch_gy = rng.standard_normal((2, 1, 1))
    img = rng.standard_normal((3, 48, 48))
    img_k = rng.standard_normal((16, 3, 5, 5))
    img_b = rng.standard_normal(16)
    img_gy = rng.standard_normal((16, 44, 44))
    pool_in = rng.standard_normal((16, 32, 32))
    up_in = rng.standard_normal((16, 16, 16))
    loops = 1 if quick else None
    return [
        ("conv fwd 7x7 patch", "conv2d_forward", (patch, patch_k, patch_b), loops or 2000),
        ("conv bwd 7x7 patch", "conv2d_backward", (patch, patch_k, patch_gy), loops or 2000),
        ("conv fwd 48x48 image", "conv2d_forward", (img, img_k, img_b), loops or 20),
        ("conv bwd 48x48 image", "conv2d_backward", (img, img_k, img_gy), loops or 10),
        ("maxpool fwd 16x32x32", "maxpool2x2_forward", (pool_in,), loops or 500),
        ("upsample fwd x2", "upsample_forward", (up_in, 2), loops or 500),
    ]


def _best_per_call(fn, args, loops: int, repeats: int) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def run_benchmark(repeats: int = 3, quick: bool = False) -> str:
    backends = available_backends()
    names = sorted(backends)
    lines = [
        f"active backend: {backend_name()}",
        f"available backends: {', '.join(names)}",
        "",
        f"{'kernel':<24}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}",
    ]
    for label, op, args, loops in _cases(quick):
        times = {}
        for n in names:
            times[n] = _best_per_call(getattr(backends[n], op), args, loops, repeats)
        row = f"{label:<24}" + "".join(f"{times[n] * 1e6:>16.2f}" for n in names)
        if "cython" in times and "numpy" in times:
            row += f"{times['numpy'] / times['cython']:>9.1f}x"
        else:
            row += f"{'n/a':>10}"
        lines.append(row)
    if "cython" not in backends:
        lines.append("")
        lines.append("compiled extension not built; only the numpy fallback was timed")
    return "\n".join(lines)

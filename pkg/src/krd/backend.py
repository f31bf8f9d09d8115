"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set ``KRD_KERNELS=python`` or ``KRD_KERNELS=compiled`` to force a backend;
the default prefers the compiled extension and silently falls back.
"""

import os
import time

_FORCED = os.environ.get("KRD_KERNELS", "").strip().lower()

if _FORCED in ("python", "py", "pure"):
    from krd import _kernels_py as _impl

    BACKEND = "python"
elif _FORCED in ("compiled", "c", "cython"):
    from krd import _kernels as _impl  # type: ignore[no-redef]

    BACKEND = "compiled"
elif _FORCED:
    raise RuntimeError(f"unknown KRD_KERNELS value: {_FORCED!r}")
else:
    try:
        from krd import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from krd import _kernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"

mix64_block = _impl.mix64_block
csr_matmul = _impl.csr_matmul


def available_backends() -> dict:
    """Importable kernel implementations keyed by backend name."""
    impls = {}
    try:
        from krd import _kernels

        impls["compiled"] = _kernels
    except ImportError:
        pass
    from krd import _kernels_py

    impls["python"] = impls.get("python", _kernels_py)
    return impls


def _time_call(fn, *args, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(num_values: int = 4_000_000, num_nodes: int = 2000,
                  avg_degree: int = 10, width: int = 64) -> list:
    """Time each kernel on each available backend.

    Returns rows ``(kernel, backend, seconds)`` so the CLI can print a
    comparison table; the two backends are also checked for agreement.
    """
    import numpy as np

    impls = available_backends()
    rows = []

    for name, impl in impls.items():
        rows.append(("mix64_block", name,
                     _time_call(impl.mix64_block, 42, 0, num_values)))

    # synthetic CSR: num_nodes rows with avg_degree entries each
    rng = np.random.default_rng(0)
    cols = rng.integers(0, num_nodes, size=num_nodes * avg_degree)
    indptr = np.arange(0, num_nodes * avg_degree + 1, avg_degree, dtype=np.int64)
    indices = np.sort(cols.reshape(num_nodes, avg_degree), axis=1).ravel().astype(np.int64)
    data = rng.random(num_nodes * avg_degree)
    x = rng.random((num_nodes, width))

    outputs = {}
    for name, impl in impls.items():
        rows.append(("csr_matmul", name,
                     _time_call(impl.csr_matmul, indptr, indices, data, x)))
        outputs[name] = impl.csr_matmul(indptr, indices, data, x)
    if len(outputs) == 2 and not np.array_equal(outputs["compiled"], outputs["python"]):
        raise AssertionError("backend mismatch in csr_matmul benchmark")
    return rows

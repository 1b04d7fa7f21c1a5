"""Hot numeric kernels with selectable backend.

Set CRFSTEREO_BACKEND=numpy to force the pure-numpy fallback,
CRFSTEREO_BACKEND=numba to require the jitted kernels (import error if
numba is missing), or leave unset / "auto" to use numba when available.
The two backends implement identical arithmetic; see
benchmarks/bench_kernels.py for a speed comparison.
"""

import os

_ENV_VAR = "CRFSTEREO_BACKEND"


def _select_backend():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}"
        )
    if choice in ("auto", "numba"):
        try:
            from . import numba_backend
            return numba_backend, "numba"
        except ImportError:
            if choice == "numba":
                raise
    from . import numpy_backend
    return numpy_backend, "numpy"


_impl, BACKEND = _select_backend()

conv2d_raw = _impl.conv2d_raw
conv2d_grad_kernel = _impl.conv2d_grad_kernel
batch_chain_min_marginals = _impl.batch_chain_min_marginals
batch_chain_min = _impl.batch_chain_min
mm_sweep = _impl.mm_sweep

"""Hot numeric kernels with selectable backend.

APBFACE_BACKEND=numba (default) uses the @njit kernels, APBFACE_BACKEND=numpy
forces the pure-numpy path. When numba is not importable the numpy path is
selected automatically. benchmarks/bench_kernels.py compares the two.
"""

import os
import warnings

from .numpy_impl import conv_out_size

_requested = os.environ.get("APBFACE_BACKEND", "numba").lower()

if _requested not in ("numba", "numpy"):
    raise ValueError(f"APBFACE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        warnings.warn("numba unavailable, falling back to the numpy kernel backend")
        from . import numpy_impl as _impl

        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl

    BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "im2col", "col2im", "conv_out_size"]

"""Backend selection for the hot stepping kernels.

The compiled extension is preferred when importable; the numpy fallback
implements the same functions with identical floating-point behavior.
Set ``SLICELAB_PURE_PY=1`` to force the fallback.
"""

import os

from . import _kernels_py
from ._kernels_py import abs_derivative_tables, horner, poly_derivative

if os.environ.get("SLICELAB_PURE_PY", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
run_flat_poly_block = _impl.run_flat_poly_block

__all__ = [
    "BACKEND",
    "abs_derivative_tables",
    "horner",
    "poly_derivative",
    "run_flat_poly_block",
]

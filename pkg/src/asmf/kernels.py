"""Backend selection for the hot accumulation kernels.

The compiled Cython module is used when it has been built; otherwise the
numpy implementation is loaded. Set ``ASMF_PURE_PYTHON=1`` to force the
fallback (results agree to rounding, not bitwise).
"""

import os

from . import _kernels_py

if os.environ.get("ASMF_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

outer_sum_packed = _impl.outer_sum_packed

__all__ = ["BACKEND", "outer_sum_packed"]

"""Numpy fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _triu(d):
    return np.triu_indices(d)


def outer_sum_packed(a, b, out):
    """Add ``sum_r a_r a_r^T - b_r b_r^T`` to the packed buffer ``out``."""
    a = np.asarray(a, dtype=np.float64)
    n, d = a.shape
    if out.shape[0] != d * (d + 1) // 2:
        raise ValueError("packed buffer has wrong length")
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != a.shape:
            raise ValueError("a and b must have the same shape")
    if n == 0 or d == 0:
        return
    s = a.T @ a
    if b is not None:
        s -= b.T @ b
    out += s[_triu(d)]

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled accumulation kernels.

Packed storage is row-major upper triangle: entry (i, j), i <= j, lives at
``i*d - i*(i-1)//2 + (j - i)``.
"""

DEF UNROLL = 4


cdef void _add_rows(const double* a, const double* b, Py_ssize_t n, Py_ssize_t d,
                    double* o) noexcept nogil:
    # rows are consumed in groups of UNROLL; inside a group the products are
    # added left to right, so the order is fixed for a given n
    cdef Py_ssize_t r, i, j, k
    cdef double c0, c1, c2, c3, e0, e1, e2, e3
    cdef const double* a0
    cdef const double* a1
    cdef const double* a2
    cdef const double* a3
    cdef const double* b0
    cdef const double* b1
    cdef const double* b2
    cdef const double* b3
    r = 0
    while r + UNROLL <= n:
        a0 = a + r * d
        a1 = a0 + d
        a2 = a1 + d
        a3 = a2 + d
        k = 0
        if b == NULL:
            for i in range(d):
                c0 = a0[i]; c1 = a1[i]; c2 = a2[i]; c3 = a3[i]
                for j in range(i, d):
                    o[k + j - i] += ((c0 * a0[j] + c1 * a1[j]) + (c2 * a2[j] + c3 * a3[j]))
                k += d - i
        else:
            b0 = b + r * d
            b1 = b0 + d
            b2 = b1 + d
            b3 = b2 + d
            for i in range(d):
                c0 = a0[i]; c1 = a1[i]; c2 = a2[i]; c3 = a3[i]
                e0 = b0[i]; e1 = b1[i]; e2 = b2[i]; e3 = b3[i]
                for j in range(i, d):
                    o[k + j - i] += (((c0 * a0[j] - e0 * b0[j]) + (c1 * a1[j] - e1 * b1[j]))
                                     + ((c2 * a2[j] - e2 * b2[j]) + (c3 * a3[j] - e3 * b3[j])))
                k += d - i
        r += UNROLL
    while r < n:
        a0 = a + r * d
        k = 0
        if b == NULL:
            for i in range(d):
                c0 = a0[i]
                for j in range(i, d):
                    o[k + j - i] += c0 * a0[j]
                k += d - i
        else:
            b0 = b + r * d
            for i in range(d):
                c0 = a0[i]
                e0 = b0[i]
                for j in range(i, d):
                    o[k + j - i] += c0 * a0[j] - e0 * b0[j]
                k += d - i
        r += 1


def outer_sum_packed(const double[:, ::1] a, const double[:, ::1] b, double[::1] out):
    """Add ``sum_r a_r a_r^T - b_r b_r^T`` to ``out``.

    ``b`` may be None, in which case only the ``a`` outer products are added.
    The summation order depends only on the number of rows.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef const double* bp = NULL

    if out.shape[0] != d * (d + 1) // 2:
        raise ValueError("packed buffer has wrong length")
    if b is not None:
        if b.shape[0] != n or b.shape[1] != d:
            raise ValueError("a and b must have the same shape")
    if n == 0 or d == 0:
        return
    if b is not None:
        bp = &b[0, 0]
    with nogil:
        _add_rows(&a[0, 0], bp, n, d, &out[0])

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Omega-streaming kernels.

Both kernels walk the observed entries grouped by row (CSR order) exactly
once. Rows are independent, so the outer loop is split across OpenMP
threads; each row is reduced sequentially, which keeps results bitwise
reproducible regardless of the thread count.
"""

from cython.parallel cimport prange


def omega_rowsum(const long[::1] indptr, const long[::1] cols,
                 const double[::1] vals, const double[:, ::1] Q,
                 double[:, ::1] out, int num_threads=1):
    """out[i] = sum over observed (i, j) of vals[ij] * Q[j]; returns loop count."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t k = Q.shape[1]
    cdef Py_ssize_t i, p, c, j
    cdef double s
    cdef long ops = 0

    for i in prange(n_rows, nogil=True, num_threads=num_threads,
                    schedule="static"):
        for c in range(k):
            out[i, c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = cols[p]
            s = vals[p]
            for c in range(k):
                out[i, c] += s * Q[j, c]
                ops += 1
    return ops


def omega_rowdot(const long[::1] indptr, const long[::1] cols,
                 const double[:, ::1] A, const double[:, ::1] Q,
                 double[::1] out, int num_threads=1):
    """out[p] = <A[i], Q[j]> for the p-th observed entry (i, j); returns loop count."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t k = Q.shape[1]
    cdef Py_ssize_t i, p, c, j
    cdef double acc
    cdef long ops = 0

    for i in prange(n_rows, nogil=True, num_threads=num_threads,
                    schedule="static"):
        for p in range(indptr[i], indptr[i + 1]):
            j = cols[p]
            acc = 0.0
            for c in range(k):
                acc = acc + A[i, c] * Q[j, c]
                ops += 1
            out[p] = acc
    return ops

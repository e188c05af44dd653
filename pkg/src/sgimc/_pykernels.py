"""Vectorized numpy fallback for the Omega-streaming kernels.

Same signatures and results as the compiled module. Used when the extension
is unavailable or ``SGIMC_PURE_PYTHON`` is set.
"""

import numpy as np


def omega_rowsum(indptr, cols, vals, Q, out, num_threads=1):
    k = Q.shape[1]
    out[:] = 0.0
    nnz = len(vals)
    if nnz == 0:
        return 0
    terms = vals[:, None] * Q[cols]
    counts = np.diff(indptr)
    nonempty = np.flatnonzero(counts)
    # reduceat misbehaves on empty segments, so only reduce the nonempty rows
    out[nonempty] = np.add.reduceat(terms, indptr[nonempty], axis=0)
    return nnz * k


def omega_rowdot(indptr, cols, A, Q, out, num_threads=1):
    k = Q.shape[1]
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    out[:] = np.einsum("ij,ij->i", A[rows], Q[cols])
    return len(cols) * k

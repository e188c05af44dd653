"""Omega-sparse storage and the two sandwich kernels.

Every gradient and hessian-vector evaluation reduces to

* ``sandwich_contract``: ``S -> X^T S Q`` for an Omega-sparse ``S``;
* ``sandwich_expand``: ``D -> (X D Q^T)`` restricted to Omega.

Both stream over Omega once, at cost ``O((|Omega| + nnz(X)) k)``. The
streaming part runs in the compiled ``_ckernels`` extension when it is
importable, otherwise in the numpy fallback ``_pykernels``.
"""

import os

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError

if os.environ.get("SGIMC_PURE_PYTHON"):
    from . import _pykernels as _backend
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _backend
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _pykernels as _backend
        BACKEND = "python"

_NUM_THREADS = 1


def set_num_threads(n):
    """Set the number of threads used by the compiled kernels."""
    global _NUM_THREADS
    _NUM_THREADS = max(1, int(n))


def get_backend():
    return _backend


def _readonly(a):
    a.flags.writeable = False
    return a


class OmegaSparseMatrix:
    """Values on a fixed set of observed positions of an ``n_rows x n_cols`` matrix.

    Entries are kept in row-major (CSR) order. The index pattern is read-only;
    :meth:`with_values` returns a new matrix on the same pattern, which is how
    the loss-derivative matrices G and H reuse Omega.
    """

    __slots__ = ("shape", "rows", "cols", "values", "indptr", "_t_order")

    def __init__(self, rows, cols, values, shape, *, _trusted=False):
        n_rows, n_cols = int(shape[0]), int(shape[1])
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise DimensionError(
                f"rows, cols and values differ in length: "
                f"{len(rows)}, {len(cols)}, {len(values)}")

        if not _trusted:
            if n_rows < 0 or n_cols < 0:
                raise DimensionError(f"negative shape {shape!r}")
            if len(rows) and (rows.min() < 0 or rows.max() >= n_rows
                              or cols.min() < 0 or cols.max() >= n_cols):
                raise DimensionError(
                    f"index out of range for shape ({n_rows}, {n_cols})")
            order = np.lexsort((cols, rows))
            rows, cols, values = rows[order], cols[order], values[order]
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                p = int(np.flatnonzero(dup)[0])
                raise ValueError(
                    f"duplicate entry ({rows[p]}, {cols[p]}) in observation set")

        self.shape = (n_rows, n_cols)
        self.rows = _readonly(np.ascontiguousarray(rows))
        self.cols = _readonly(np.ascontiguousarray(cols))
        self.values = _readonly(np.ascontiguousarray(values))
        self.indptr = _readonly(np.searchsorted(
            self.rows, np.arange(n_rows + 1), side="left").astype(np.int64))
        self._t_order = None

    @classmethod
    def from_dense(cls, A, mask=None):
        """Observe ``A`` on ``mask`` (all entries when ``mask`` is None)."""
        A = np.asarray(A, dtype=np.float64)
        if mask is None:
            rows, cols = np.indices(A.shape).reshape(2, -1)
        else:
            rows, cols = np.nonzero(mask)
        return cls(rows, cols, A[rows, cols], A.shape)

    @property
    def nnz(self):
        return len(self.values)

    def __len__(self):
        return self.nnz

    def __repr__(self):
        return f"OmegaSparseMatrix(shape={self.shape}, nnz={self.nnz})"

    def with_values(self, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        if len(values) != self.nnz:
            raise DimensionError(
                f"expected {self.nnz} values for this pattern, got {len(values)}")
        out = object.__new__(OmegaSparseMatrix)
        out.shape = self.shape
        out.rows, out.cols, out.indptr = self.rows, self.cols, self.indptr
        out.values = _readonly(np.ascontiguousarray(values.copy()))
        out._t_order = self._t_order
        return out

    def transpose_order(self):
        """Permutation taking these values to the row-major order of the transpose."""
        if self._t_order is None:
            self._t_order = _readonly(np.lexsort((self.rows, self.cols)))
        return self._t_order

    def transpose(self):
        order = self.transpose_order()
        return OmegaSparseMatrix(
            self.cols[order], self.rows[order], self.values[order],
            (self.shape[1], self.shape[0]), _trusted=True)

    @property
    def T(self):
        return self.transpose()

    def subset(self, index):
        """Keep the entries at positions ``index`` (in storage order)."""
        index = np.sort(np.asarray(index, dtype=np.int64))
        return OmegaSparseMatrix(self.rows[index], self.cols[index],
                                 self.values[index], self.shape, _trusted=True)

    def to_dense(self, fill=0.0):
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.values
        return out

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.cols, self.indptr), shape=self.shape)

    def same_pattern(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols))


def as_features(X):
    """Coerce a feature matrix to C-contiguous float64 ndarray or CSR."""
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-d, got shape {X.shape}")
    return X


def nnz_features(X):
    return X.nnz if sp.issparse(X) else X.size


def _check_dense(name, A, shape=None):
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {A.shape}")
    if shape is not None:
        for axis, (got, want) in enumerate(zip(A.shape, shape)):
            if want is not None and got != want:
                raise DimensionError(
                    f"{name} has shape {A.shape}; axis {axis} should be {want}")
    return A


def _contract(X, pattern, values, Q):
    # T = S Q streamed over Omega, then X^T T.
    T = np.empty((pattern.shape[0], Q.shape[1]))
    _backend.omega_rowsum(pattern.indptr, pattern.cols, values, Q, T, _NUM_THREADS)
    return np.asarray(X.T @ T)


def _expand(X, D, Q, pattern):
    XD = np.ascontiguousarray(X @ D, dtype=np.float64)
    out = np.empty(pattern.nnz)
    _backend.omega_rowdot(pattern.indptr, pattern.cols, XD, Q, out, _NUM_THREADS)
    return out


def sandwich_contract(X, S, Q):
    """Compute ``X^T S Q`` without densifying the Omega-sparse ``S``."""
    X = as_features(X)
    n1, n2 = S.shape
    if X.shape[0] != n1:
        raise DimensionError(f"X has {X.shape[0]} rows; S has {n1}")
    Q = _check_dense("Q", Q, (n2, None))
    return _contract(X, S, S.values, Q)


def sandwich_expand(X, D, Q, pattern):
    """Return ``X D Q^T`` evaluated only at the positions of ``pattern``."""
    X = as_features(X)
    n1, n2 = pattern.shape
    if X.shape[0] != n1:
        raise DimensionError(f"X has {X.shape[0]} rows; pattern has {n1}")
    D = _check_dense("D", D, (X.shape[1], None))
    Q = _check_dense("Q", Q, (n2, D.shape[1]))
    return pattern.with_values(_expand(X, D, Q, pattern))


def relative_frobenius_distance(A, B):
    """``||A - B||_F / ||B||_F``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    denom = np.linalg.norm(B)
    if denom == 0.0:
        raise ZeroDivisionError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(A - B) / denom)

"""File formats: MatrixMarket (sparse), headed dense text, the model container.

Floats are written with ``%.17g`` so every text format round-trips exactly.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, SGIMCError
from .loss import LossKind, check_labels
from .penalty import active_rows
from .solver import FactorPair, Problem
from .sparse import OmegaSparseMatrix

MM_HEADER = "%%MatrixMarket matrix coordinate real general"
MODEL_MAGIC = "SGIMC1"
FLOAT_FMT = "%.17g"


class FormatError(SGIMCError, ValueError):
    """A file does not follow the expected format."""


def _data_lines(fh):
    for line in fh:
        s = line.strip()
        if s and not s.startswith("%"):
            yield s


def read_mtx(path):
    """Read a coordinate MatrixMarket file (1-based) into an OmegaSparseMatrix."""
    path = Path(path)
    with open(path) as fh:
        banner = fh.readline().strip().lower().split()
        if (len(banner) < 5 or banner[0] != "%%matrixmarket" or banner[1] != "matrix"
                or banner[2] != "coordinate"):
            raise FormatError(f"{path}: not a coordinate MatrixMarket file")
        if banner[3] not in ("real", "integer") or banner[4] != "general":
            raise FormatError(f"{path}: unsupported field/symmetry {banner[3]}/{banner[4]}")
        lines = _data_lines(fh)
        try:
            n_rows, n_cols, nnz = (int(t) for t in next(lines).split()[:3])
        except (StopIteration, ValueError):
            raise FormatError(f"{path}: missing size line") from None
        body = [ln.split() for ln in lines]
    if len(body) != nnz:
        raise FormatError(f"{path}: header declares {nnz} entries, found {len(body)}")
    if nnz == 0:
        return OmegaSparseMatrix([], [], [], (n_rows, n_cols))
    try:
        rows = np.array([int(t[0]) for t in body], dtype=np.int64) - 1
        cols = np.array([int(t[1]) for t in body], dtype=np.int64) - 1
        vals = np.array([float(t[2]) for t in body], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed entry ({exc})") from None
    try:
        return OmegaSparseMatrix(rows, cols, vals, (n_rows, n_cols))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_mtx(path, S):
    """Write an OmegaSparseMatrix (or scipy sparse matrix) in row-major order."""
    if sp.issparse(S):
        coo = sp.coo_matrix(S)
        S = OmegaSparseMatrix(coo.row, coo.col, coo.data, coo.shape)
    with open(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{S.shape[0]} {S.shape[1]} {S.nnz}\n")
        for i, j, v in zip(S.rows.tolist(), S.cols.tolist(), S.values.tolist()):
            fh.write(f"{i + 1} {j + 1} {FLOAT_FMT % v}\n")


def read_dense(path):
    """Read whitespace-delimited text whose first line is ``rows cols``."""
    path = Path(path)
    with open(path) as fh:
        try:
            n_rows, n_cols = (int(t) for t in fh.readline().split())
        except ValueError:
            raise FormatError(f"{path}: first line must be 'rows cols'") from None
        data = np.array(fh.read().split(), dtype=np.float64)
    if data.size != n_rows * n_cols:
        raise FormatError(
            f"{path}: header says {n_rows}x{n_cols}, found {data.size} values")
    return data.reshape(n_rows, n_cols)


def write_dense(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        if A.size:
            np.savetxt(fh, A, fmt=FLOAT_FMT)


def read_features(path):
    """Dense text, or a sparse MatrixMarket file (``.mtx``) returned as CSR."""
    path = Path(path)
    if path.suffix == ".mtx":
        return read_mtx(path).to_scipy()
    return read_dense(path)


def write_features(path, F):
    if sp.issparse(F) or Path(path).suffix == ".mtx":
        write_mtx(path, sp.csr_matrix(F))
    else:
        write_dense(path, F)


def read_pairs(path):
    """Read ``i j [value]`` lines (0-based). Returns ``(pairs, values or None)``."""
    with open(path) as fh:
        rows = [ln.split() for ln in _data_lines(fh)]
    if not rows:
        return np.empty((0, 2), dtype=np.int64), None
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise FormatError(f"{path}: expected 'i j' or 'i j value' on every line")
    pairs = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
    values = None
    if len(rows[0]) == 3:
        values = np.array([float(r[2]) for r in rows], dtype=np.float64)
    return pairs, values


def write_pairs(path, pairs, values=None):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    with open(path, "w") as fh:
        if values is None:
            for i, j in pairs.tolist():
                fh.write(f"{i} {j}\n")
        else:
            for (i, j), v in zip(pairs.tolist(), np.asarray(values, dtype=float).tolist()):
                fh.write(f"{i} {j} {FLOAT_FMT % v}\n")


@dataclass
class DatasetBundle:
    m_path: str
    x_path: str
    y_path: str
    loss: str = "squared"
    remap_labels: bool = False


def load_problem(bundle):
    """Load and validate ``(M, X, Y)``; optionally remap {0, 1} labels to {-1, +1}."""
    loss = LossKind.parse(bundle.loss)
    M = read_mtx(bundle.m_path)
    X = read_features(bundle.x_path)
    Y = read_features(bundle.y_path)
    n1, n2 = M.shape
    if X.shape[0] != n1:
        raise DimensionError(
            f"{bundle.x_path}: X has {X.shape[0]} rows, expected {n1} (rows of {bundle.m_path})")
    if Y.shape[0] != n2:
        raise DimensionError(
            f"{bundle.y_path}: Y has {Y.shape[0]} rows, expected {n2} "
            f"(columns of {bundle.m_path})")
    if bundle.remap_labels:
        vals = M.values
        if not np.isin(vals, (0.0, 1.0)).all():
            bad = np.flatnonzero(~np.isin(vals, (0.0, 1.0)))[:10]
            raise FormatError(
                f"{bundle.m_path}: label remap expects 0/1 values; offending entries "
                + ", ".join(f"({M.rows[p]}, {M.cols[p]})={vals[p].item()!r}" for p in bad))
        M = M.with_values(np.where(vals > 0, 1.0, -1.0))
    if loss is LossKind.LOGISTIC:
        check_labels(M.values)
    return Problem(M, X, Y, loss)


@dataclass
class PairSplit:
    labels: np.ndarray
    full: OmegaSparseMatrix
    train: OmegaSparseMatrix
    test: OmegaSparseMatrix


def similarity_matrix(labels):
    labels = np.asarray(labels)
    return np.where(labels[:, None] == labels[None, :], 1.0, -1.0)


def build_pair_similarity(labels, train_fraction, seed=0):
    """Signed same-class matrix over all item pairs, split uniformly into train/test."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("need at least two classes")
    S = similarity_matrix(labels)
    full = OmegaSparseMatrix.from_dense(S)
    rng = np.random.default_rng(seed)
    m = max(1, int(round(train_fraction * full.nnz)))
    if m >= full.nnz:
        raise ValueError("train fraction leaves no test entries")
    pick = rng.choice(full.nnz, size=m, replace=False)
    test_mask = np.ones(full.nnz, dtype=bool)
    test_mask[pick] = False
    return PairSplit(labels, full, full.subset(pick), full.subset(np.flatnonzero(test_mask)))


def save_model(path, f, config=None, extra=None):
    """Write factors and metadata to the ``SGIMC1`` text container."""
    mats = {"U": f.U, "V": f.V}
    if f.combined:
        mats.update(Ut=f.Ut, Vt=f.Vt)
    meta = {
        "k": int(f.k),
        "matrices": list(mats),
        "active_u": active_rows(f.U).tolist(),
        "active_v": active_rows(f.V).tolist(),
        "config": config or {},
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for name, A in mats.items():
            fh.write(f"{name} {A.shape[0]} {A.shape[1]}\n")
            if A.size:
                np.savetxt(fh, A, fmt=FLOAT_FMT)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(FactorPair, metadata)``."""
    with open(path) as fh:
        if fh.readline().rstrip("\n") != MODEL_MAGIC:
            raise FormatError(f"{path}: missing {MODEL_MAGIC} header")
        try:
            meta = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad metadata line ({exc})") from None
        mats = {}
        for _ in meta["matrices"]:
            try:
                name, r, c = fh.readline().split()
                r, c = int(r), int(c)
            except ValueError:
                raise FormatError(f"{path}: bad matrix header") from None
            vals = [fh.readline().split() for _ in range(r)]
            A = np.array(vals, dtype=np.float64).reshape(r, c) if r else np.zeros((0, c))
            mats[name] = A
    return FactorPair(mats["U"], mats["V"], mats.get("Ut"), mats.get("Vt")), meta

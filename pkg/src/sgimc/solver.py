"""Alternating (Gauss-Seidel) fit of ``M ~ X U V^T Y^T`` with row-sparse factors.

The V-update is the U-update of the transposed problem ``(M^T, Y, X)``, so a
single partial-problem path serves both blocks. Optionally a transductive
residual ``Ut Vt^T`` is fitted alongside (the combined model).
"""

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import sparse as _sp
from .admm import AdmmConfig, AdmmState, NewtonConfig, admm_solve, partial_objective
from .exceptions import ColdStartError, DimensionError, SGIMCError
from .loss import LossKind, check_labels, loss_value
from .penalty import Penalty, PenaltyKind, active_rows, penalty_value
from .sparse import OmegaSparseMatrix, as_features
from .subproblem import PartialProblem, solve


@dataclass
class Problem:
    M: OmegaSparseMatrix
    X: object
    Y: object
    loss: LossKind = LossKind.SQUARED

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        self.X = as_features(self.X)
        self.Y = as_features(self.Y)
        n1, n2 = self.M.shape
        if self.X.shape[0] != n1:
            raise DimensionError(f"X has {self.X.shape[0]} rows, expected n1={n1}")
        if self.Y.shape[0] != n2:
            raise DimensionError(f"Y has {self.Y.shape[0]} rows, expected n2={n2}")
        if self.loss is LossKind.LOGISTIC:
            check_labels(self.M.values)

    @property
    def shape(self):
        return self.M.shape

    @property
    def d1(self):
        return self.X.shape[1]

    @property
    def d2(self):
        return self.Y.shape[1]

    def transpose(self):
        return Problem(self.M.transpose(), self.Y, self.X, self.loss)

    def with_observations(self, M):
        return Problem(M, self.X, self.Y, self.loss)


@dataclass
class FactorPair:
    U: np.ndarray
    V: np.ndarray
    Ut: np.ndarray = None
    Vt: np.ndarray = None

    def __post_init__(self):
        if self.U.shape[1] != self.V.shape[1]:
            raise DimensionError(f"U and V ranks differ: {self.U.shape[1]} vs {self.V.shape[1]}")
        if (self.Ut is None) != (self.Vt is None):
            raise ValueError("residual factors must be given together")
        if self.Ut is not None and self.Ut.shape[1] != self.Vt.shape[1]:
            raise DimensionError("residual factor ranks differ")

    @property
    def k(self):
        return self.U.shape[1]

    @property
    def combined(self):
        return self.Ut is not None

    def transpose(self):
        return FactorPair(self.V, self.U, self.Vt, self.Ut)

    def copy(self):
        cp = lambda a: None if a is None else a.copy()
        return FactorPair(cp(self.U), cp(self.V), cp(self.Ut), cp(self.Vt))


@dataclass
class SolveConfig:
    k: int = 5
    lam_u: float = 0.0
    lam_v: float = 0.0
    penalty_u: PenaltyKind = PenaltyKind.GROUP
    penalty_v: PenaltyKind = PenaltyKind.GROUP
    combined: bool = False
    k1: int = None
    lam_ut: float = 1e-3
    lam_vt: float = 1e-3
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    outer_tol: float = 1e-5
    outer_max_iter: int = 50
    seed: int = 0

    def __post_init__(self):
        self.penalty_u = PenaltyKind.parse(self.penalty_u)
        self.penalty_v = PenaltyKind.parse(self.penalty_v)
        if isinstance(self.admm, dict):
            self.admm = AdmmConfig(**self.admm)
        if isinstance(self.newton, dict):
            self.newton = NewtonConfig(**self.newton)
        if self.k < 1:
            raise ValueError("rank k must be at least 1")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        for name in ("lam_u", "lam_v", "lam_ut", "lam_vt"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def rank_residual(self):
        return self.k1 if self.k1 is not None else self.k

    def penalties(self):
        return Penalty(self.penalty_u, self.lam_u), Penalty(self.penalty_v, self.lam_v)

    def to_dict(self):
        out = asdict(self)
        out["penalty_u"] = self.penalty_u.value
        out["penalty_v"] = self.penalty_v.value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SolveConfig fields: {sorted(unknown)}")
        return cls(**data)

    def transposed(self):
        """Config for the transposed problem: U and V roles swapped."""
        d = self.to_dict()
        d["lam_u"], d["lam_v"] = self.lam_v, self.lam_u
        d["penalty_u"], d["penalty_v"] = d["penalty_v"], d["penalty_u"]
        d["lam_ut"], d["lam_vt"] = self.lam_vt, self.lam_ut
        return SolveConfig.from_dict(d)


@dataclass
class FitReport:
    objective: list = field(default_factory=list)
    change: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    admm_iterations: list = field(default_factory=list)
    active_u: list = field(default_factory=list)
    active_v: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False
    stagnated: bool = False
    error: str = None

    @property
    def n_sweeps(self):
        return len(self.seconds)

    def to_dict(self):
        out = asdict(self)
        out["n_sweeps"] = self.n_sweeps
        return out


def init_factors(prob, cfg):
    """Seeded Gaussian init, standard deviation ``1/sqrt(k)``."""
    rng = np.random.default_rng(cfg.seed)
    s = 1.0 / np.sqrt(cfg.k)
    U = rng.normal(0.0, s, size=(prob.d1, cfg.k))
    V = rng.normal(0.0, s, size=(prob.d2, cfg.k))
    if not cfg.combined:
        return FactorPair(U, V)
    n1, n2 = prob.shape
    k1 = cfg.rank_residual
    # small nonzero start: Ut = Vt = 0 is a stationary point of the residual blocks
    Ut = rng.normal(0.0, 1e-2, size=(n1, k1))
    Vt = rng.normal(0.0, 1e-2, size=(n2, k1))
    return FactorPair(U, V, Ut, Vt)


def _inductive_omega(prob, U, V):
    Q = np.ascontiguousarray(np.asarray(prob.Y @ V), dtype=np.float64)
    return _sp._expand(prob.X, U, Q, prob.M)


def _residual_omega(pattern, Ut, Vt):
    out = np.empty(pattern.nnz)
    _sp.get_backend().omega_rowdot(pattern.indptr, pattern.cols,
                                   np.ascontiguousarray(Ut), np.ascontiguousarray(Vt),
                                   out, _sp._NUM_THREADS)
    return out


def omega_predictions(prob, f):
    """Model values on the observed positions, in storage order."""
    p = _inductive_omega(prob, f.U, f.V)
    if f.combined:
        p += _residual_omega(prob.M, f.Ut, f.Vt)
    return p


def objective_full(prob, f, cfg):
    """Loss on Omega plus all penalty terms of the (combined) model."""
    _check_factors(prob, f)
    pen_u, pen_v = cfg.penalties()
    p = omega_predictions(prob, f)
    J = float(loss_value(prob.loss, prob.M.values, p).sum())
    J += penalty_value(pen_u, f.U) + penalty_value(pen_v, f.V)
    if f.combined:
        J += cfg.lam_ut * float(np.vdot(f.Ut, f.Ut)) + cfg.lam_vt * float(np.vdot(f.Vt, f.Vt))
    return J


def _check_factors(prob, f):
    if f.U.shape[0] != prob.d1 or f.V.shape[0] != prob.d2:
        raise DimensionError(
            f"factor shapes {f.U.shape}, {f.V.shape} do not match features "
            f"d1={prob.d1}, d2={prob.d2}")
    if f.combined and (f.Ut.shape[0] != prob.shape[0] or f.Vt.shape[0] != prob.shape[1]):
        raise DimensionError("residual factor shapes do not match M")


def _block_update(M, X, Q, offset, penalty, current, state, loss, cfg):
    pp = PartialProblem(M, X, Q, loss, eta=cfg.admm.eta, offset=offset)
    Z, state = admm_solve(pp, penalty, cfg.admm, warm=state, newton=cfg.newton)
    rejected = partial_objective(pp, penalty, Z) > partial_objective(pp, penalty, current)
    if rejected:
        # inexact ADMM overshot; keep the block unchanged so J never increases
        Z = current
        state = AdmmState.start(current)
    return Z, state, rejected


def _residual_update(M, B, offset, lam, current, loss, cfg):
    n = M.shape[0]
    pp = PartialProblem(M, sp.identity(n, format="csr"), B, loss,
                        lam_r=2.0 * lam, eta=np.inf, offset=offset)
    A, info = solve(pp, current, tol=cfg.newton.tol, max_newton=cfg.newton.max_newton,
                    max_cg=cfg.newton.max_cg)
    if pp.quadratic(A) + loss_value(loss, M.values, pp.predict(A)).sum() > \
            pp.quadratic(current) + loss_value(loss, M.values, pp.predict(current)).sum():
        return current, info
    return A, info


def fit(prob, cfg, init=None):
    """Alternate U- and V-blocks (and the residual blocks) until the
    Omega-restricted prediction stops changing.

    Returns ``(FactorPair, FitReport)``. ``report.objective[0]`` is the
    objective at the initial point; one entry is appended per sweep.
    """
    f = init.copy() if init is not None else init_factors(prob, cfg)
    if f.combined != cfg.combined:
        raise ValueError("init residual factors must match cfg.combined")
    _check_factors(prob, f)
    if f.k != cfg.k:
        raise DimensionError(f"init rank {f.k} differs from cfg.k={cfg.k}")

    report = FitReport()
    pen_u, pen_v = cfg.penalties()
    probT = prob.transpose()
    order = prob.M.transpose_order()
    loss = prob.loss

    P_prev = omega_predictions(prob, f)
    report.objective.append(objective_full(prob, f, cfg))
    state_u = AdmmState.start(f.U)
    state_v = AdmmState.start(f.V)

    try:
        for _ in range(cfg.outer_max_iter):
            t0 = time.perf_counter()
            res = _residual_omega(prob.M, f.Ut, f.Vt) if f.combined else None

            Q = np.asarray(prob.Y @ f.V)
            f.U, state_u, rej_u = _block_update(
                prob.M, prob.X, Q, res, pen_u, f.U, state_u, loss, cfg)

            Q = np.asarray(prob.X @ f.U)
            f.V, state_v, rej_v = _block_update(
                probT.M, probT.X, Q, None if res is None else res[order],
                pen_v, f.V, state_v, loss, cfg)

            if f.combined:
                ind = _inductive_omega(prob, f.U, f.V)
                f.Ut, _ = _residual_update(prob.M, f.Vt, ind, cfg.lam_ut, f.Ut, loss, cfg)
                f.Vt, _ = _residual_update(probT.M, f.Ut, ind[order], cfg.lam_vt, f.Vt,
                                           loss, cfg)

            P = omega_predictions(prob, f)
            change = float(np.linalg.norm(P - P_prev) / max(1.0, np.linalg.norm(P_prev)))
            P_prev = P

            report.objective.append(objective_full(prob, f, cfg))
            report.change.append(change)
            report.primal_residual.append([state_u.primal_residual, state_v.primal_residual])
            report.dual_residual.append([state_u.dual_residual, state_v.dual_residual])
            report.admm_iterations.append([state_u.iteration, state_v.iteration])
            report.active_u.append(active_rows(f.U).tolist())
            report.active_v.append(active_rows(f.V).tolist())
            report.rejected.append([bool(rej_u), bool(rej_v)])
            report.stagnated |= state_u.stagnated or state_v.stagnated
            report.seconds.append(time.perf_counter() - t0)
            if change < cfg.outer_tol:
                report.converged = True
                break
    except SGIMCError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        raise
    return f, report


def predict(f, X, Y, pairs, *, include_residual=True, transform=None):
    """Model values ``x_i^T U V^T y_j`` (+ residual) for index pairs.

    ``transform`` may be ``"proba"`` (logistic sigmoid) or ``"sign"``
    (+1/-1 with ties to +1).
    """
    X, Y = as_features(X), as_features(Y)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    if len(pairs) and (i.min() < 0 or j.min() < 0
                       or i.max() >= X.shape[0] or j.max() >= Y.shape[0]):
        raise IndexError(f"pair index out of range for {X.shape[0]} x {Y.shape[0]}")
    if X.shape[1] != f.U.shape[0] or Y.shape[1] != f.V.shape[0]:
        raise DimensionError("feature widths do not match the factors")
    A = np.asarray(X[i] @ f.U)
    B = np.asarray(Y[j] @ f.V)
    p = np.einsum("ij,ij->i", A, B)
    if include_residual and f.combined:
        n1, n2 = f.Ut.shape[0], f.Vt.shape[0]
        if len(pairs) and (i.max() >= n1 or j.max() >= n2):
            raise ColdStartError(
                f"residual factors cover {n1} x {n2} training rows/columns; "
                "predict unseen ones with include_residual=False")
        p += np.einsum("ij,ij->i", f.Ut[i], f.Vt[j])
    if transform is None:
        return p
    if transform == "proba":
        return expit(p)
    if transform == "sign":
        return np.where(p >= 0, 1.0, -1.0)
    raise ValueError(f"unknown transform {transform!r}")


def predict_full(f, X, Y, *, include_residual=True):
    """Dense ``X U V^T Y^T`` (+ residual)."""
    X, Y = as_features(X), as_features(Y)
    out = np.asarray(X @ f.U) @ np.asarray(Y @ f.V).T
    if include_residual and f.combined:
        if out.shape != (f.Ut.shape[0], f.Vt.shape[0]):
            raise ColdStartError("residual factors do not cover these rows/columns")
        out += f.Ut @ f.Vt.T
    return out


def augment_identity(prob):
    """Append identity blocks: ``X' = [X | I_n1]``, ``Y' = [Y | I_n2]`` (sparse)."""
    n1, n2 = prob.shape
    X = sp.hstack([sp.csr_matrix(prob.X), sp.identity(n1, format="csr")], format="csr")
    Y = sp.hstack([sp.csr_matrix(prob.Y), sp.identity(n2, format="csr")], format="csr")
    return Problem(prob.M, X, Y, prob.loss)

"""The smooth u-step: one factor, the other frozen, plus quadratic terms.

Minimizes over ``U`` (``d x k``)::

    sum_Omega L(M_ij, p_ij) + lam_r/2 ||U||^2 + 1/(2 eta) ||U - target||^2

with ``p = (X U Q^T)_Omega + offset`` by Newton-CG with Armijo backtracking.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, NumericalError
from .loss import LossKind, check_labels, loss_grad, loss_hess, loss_value
from .sparse import OmegaSparseMatrix, _check_dense, _contract, _expand, as_features

DEFAULT_TOL = {LossKind.SQUARED: 1e-8, LossKind.LOGISTIC: 1e-6}

ARMIJO_C = 1e-4
MAX_BACKTRACK = 40


@dataclass
class PartialProblem:
    """Data for one partial problem.

    ``eta = inf`` drops the proximal term; ``offset`` is a fixed additive
    prediction on Omega (the other model part in the combined model).
    """

    M: OmegaSparseMatrix
    X: object
    Q: np.ndarray
    loss: LossKind = LossKind.SQUARED
    lam_r: float = 0.0
    eta: float = 1.0
    target: np.ndarray = None
    offset: np.ndarray = None

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        self.X = as_features(self.X)
        n1, n2 = self.M.shape
        if self.X.shape[0] != n1:
            raise DimensionError(f"X has {self.X.shape[0]} rows; M has {n1}")
        self.Q = _check_dense("Q", self.Q, (n2, None))
        if self.target is None:
            self.target = np.zeros((self.d, self.k))
        self.target = _check_dense("target", self.target, (self.d, self.k))
        if self.offset is not None:
            self.offset = np.asarray(self.offset, dtype=np.float64).ravel()
            if len(self.offset) != self.M.nnz:
                raise DimensionError("offset must have one value per observed entry")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.lam_r >= 0:
            raise ValueError(f"lam_r must be nonnegative, got {self.lam_r}")
        if self.loss is LossKind.LOGISTIC:
            check_labels(self.M.values)

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def k(self):
        return self.Q.shape[1]

    @property
    def inv_eta(self):
        eta = self.eta
        return 0.0 if eta == np.inf else 1.0 / eta

    def with_target(self, target):
        return replace(self, target=target)

    def predict(self, U):
        p = _expand(self.X, U, self.Q, self.M)
        if self.offset is not None:
            p += self.offset
        return p

    def quadratic(self, U):
        out = 0.5 * self.lam_r * np.vdot(U, U)
        if self.inv_eta:
            R = U - self.target
            out += 0.5 * self.inv_eta * np.vdot(R, R)
        return float(out)

    def curvature(self):
        return self.lam_r + self.inv_eta


def _check_U(pp, U, name="U"):
    return _check_dense(name, U, (pp.d, pp.k))


def objective(pp, U):
    U = _check_U(pp, U)
    p = pp.predict(U)
    return float(loss_value(pp.loss, pp.M.values, p).sum()) + pp.quadratic(U)


def _gradient_at(pp, U, p):
    G = loss_grad(pp.loss, pp.M.values, p)
    g = _contract(pp.X, pp.M, G, pp.Q) + pp.curvature() * U
    if pp.inv_eta:
        g -= pp.inv_eta * pp.target
    return g


def gradient(pp, U):
    U = _check_U(pp, U)
    return _gradient_at(pp, U, pp.predict(U))


def _hess_vec_with(pp, h, D):
    e = _expand(pp.X, D, pp.Q, pp.M)
    return _contract(pp.X, pp.M, h * e, pp.Q) + pp.curvature() * D


def hess_vec(pp, U, D):
    U = _check_U(pp, U)
    D = _check_U(pp, D, "D")
    h = loss_hess(pp.loss, pp.M.values, pp.predict(U))
    return _hess_vec_with(pp, h, D)


@dataclass
class NewtonInfo:
    converged: bool = False
    stagnated: bool = False
    n_newton: int = 0
    n_cg: int = 0
    grad_norm: float = np.nan
    objective: list = field(default_factory=list)


def _hess_diag(pp, h):
    """Diagonal of the Hessian: ``(X*X)^T H (Q*Q) + curvature``."""
    X2 = pp.X.multiply(pp.X).tocsr() if sp.issparse(pp.X) else pp.X * pp.X
    return _contract(X2, pp.M, h, pp.Q * pp.Q) + pp.curvature()


def _cg(hv, g, tol, max_iter, diag=None):
    """Approximately solve ``H s = -g`` by (Jacobi-preconditioned) CG.

    Stops on the unpreconditioned residual ``||H s + g|| <= tol``.
    Returns ``(s, iterations)``.
    """
    s = np.zeros_like(g)
    r = -g
    z = r if diag is None else r / diag
    d = z.copy()
    rz = np.vdot(r, z)
    rnorm = np.sqrt(np.vdot(r, r))
    it = 0
    while it < max_iter and rnorm > tol:
        Hd = hv(d)
        dHd = np.vdot(d, Hd)
        it += 1
        if dHd <= 0:
            if it == 1:
                s = -g
            break
        alpha = rz / dHd
        s += alpha * d
        r -= alpha * Hd
        rnorm = np.sqrt(np.vdot(r, r))
        z = r if diag is None else r / diag
        rz_new = np.vdot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    return s, it


def solve(pp, U0, tol=None, max_newton=50, max_cg=100):
    """Newton-CG on the partial problem.

    Stops once ``||grad||_F <= tol * max(1, ||grad(U0)||_F)``. Each Newton
    system is solved by CG to the forcing tolerance
    ``min(0.5, sqrt(||g||)) ||g||`` (or to the final tolerance for the
    squared loss, which makes one solve sufficient), followed by Armijo
    backtracking. If backtracking fails, the current iterate is returned with
    ``info.stagnated`` set.

    Returns
    -------
    U : ndarray (d, k)
    info : NewtonInfo
    """
    if tol is None:
        tol = DEFAULT_TOL[pp.loss]
    if not tol > 0:
        raise ValueError("tol must be positive")
    y = pp.M.values
    U = _check_U(pp, U0).copy()
    p = pp.predict(U)
    f = float(loss_value(pp.loss, y, p).sum()) + pp.quadratic(U)
    g = _gradient_at(pp, U, p)
    gnorm = np.linalg.norm(g)
    stop = tol * max(1.0, gnorm)
    info = NewtonInfo(objective=[f])
    quadratic_loss = pp.loss is LossKind.SQUARED

    while True:
        info.grad_norm = float(gnorm)
        if gnorm <= stop:
            info.converged = True
            break
        if info.n_newton >= max_newton:
            break
        if not np.isfinite(gnorm):
            raise NumericalError("non-finite gradient in u-step")

        h = loss_hess(pp.loss, y, p)
        forcing = min(0.5, np.sqrt(gnorm)) * gnorm
        if quadratic_loss:
            forcing = min(forcing, 0.5 * stop)
        diag = _hess_diag(pp, h)
        if not (diag > 0).all():
            diag = None
        s, n_cg = _cg(lambda D: _hess_vec_with(pp, h, D), g, forcing, max_cg, diag)
        info.n_cg += n_cg
        info.n_newton += 1

        # p is affine in U, so trial predictions need one expand per step
        e = _expand(pp.X, s, pp.Q, pp.M)
        slope = np.vdot(g, s)
        if slope >= 0:
            s, e, slope = -g, _expand(pp.X, -g, pp.Q, pp.M), -gnorm ** 2
        t = 1.0
        for _ in range(MAX_BACKTRACK):
            U_t = U + t * s
            p_t = p + t * e
            f_t = float(loss_value(pp.loss, y, p_t).sum()) + pp.quadratic(U_t)
            if f_t <= f + ARMIJO_C * t * slope:
                break
            t *= 0.5
        else:
            info.stagnated = True
            break
        U, p, f = U_t, p_t, f_t
        info.objective.append(f)
        g = _gradient_at(pp, U, p)
        gnorm = np.linalg.norm(g)

    return U, info

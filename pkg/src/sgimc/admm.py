"""Scaled ADMM for one partial problem with a nonsmooth row penalty.

Splits ``min_U f(U) + lam R(U)`` into the consensus form ``U = Z`` and
iterates

    U <- argmin f(U) + 1/(2 eta) ||U - (Z - Phi)||^2      (Newton-CG)
    Z <- prox_{eta lam R}(U + Phi)
    Phi <- Phi + U - Z
"""

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NumericalError
from .loss import loss_value
from .penalty import penalty_value, prox
from .subproblem import solve


@dataclass
class AdmmConfig:
    eta: float = 1.0
    eps_abs: float = 1e-5
    eps_rel: float = 1e-4
    max_iter: int = 200
    # residual balancing: rescale eta by ``tau`` when one residual exceeds
    # ``mu`` times the other
    adaptive: bool = False
    mu: float = 10.0
    tau: float = 2.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("ADMM tolerances must be positive")
        if not (self.mu > 1 and self.tau > 1):
            raise ValueError("mu and tau must exceed 1")


@dataclass
class NewtonConfig:
    tol: float = None
    max_newton: int = 50
    max_cg: int = 100


@dataclass
class AdmmState:
    U: np.ndarray
    Z: np.ndarray
    Phi: np.ndarray
    eta: float = None
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    converged: bool = False
    stagnated: bool = False
    n_newton: int = 0
    n_cg: int = 0

    @classmethod
    def start(cls, U0):
        U0 = np.array(U0, dtype=np.float64)
        return cls(U=U0.copy(), Z=U0.copy(), Phi=np.zeros_like(U0))


def _norm(A):
    return float(np.sqrt(np.vdot(A, A)))


def partial_objective(pp, penalty, U):
    """Loss on Omega + ``lam_r/2 ||U||^2`` + penalty (no proximal term)."""
    p = pp.predict(U)
    return (float(loss_value(pp.loss, pp.M.values, p).sum())
            + 0.5 * pp.lam_r * float(np.vdot(U, U))
            + penalty_value(penalty, U))


def admm_solve(pp, penalty, cfg=None, warm=None, newton=None):
    """Run scaled ADMM; returns ``(Z, state)``.

    ``Z`` is the exactly row-sparse consensus iterate. Any ``target`` or
    ``eta`` already on ``pp`` is replaced by the ADMM values. When ``warm``
    is None the iteration starts from zero. A warm state carrying its own
    ``eta`` resumes with that step (the scaled dual is tied to it).
    """
    cfg = cfg or AdmmConfig()
    newton = newton or NewtonConfig()
    shape = (pp.d, pp.k)
    if warm is None:
        warm = AdmmState.start(np.zeros(shape))
    for name in ("U", "Z", "Phi"):
        if getattr(warm, name).shape != shape:
            raise ValueError(f"warm state {name} has shape "
                             f"{getattr(warm, name).shape}, expected {shape}")

    U, Z, Phi = warm.U.copy(), warm.Z.copy(), warm.Phi.copy()
    eta = cfg.eta if warm.eta is None else warm.eta
    sub = replace(pp, eta=eta, target=Z - Phi)
    state = AdmmState(U=U, Z=Z, Phi=Phi)
    scale_abs = cfg.eps_abs * np.sqrt(U.size)

    for it in range(1, cfg.max_iter + 1):
        sub.target = Z - Phi
        U, info = solve(sub, U, tol=newton.tol, max_newton=newton.max_newton,
                        max_cg=newton.max_cg)
        state.n_newton += info.n_newton
        state.n_cg += info.n_cg
        state.stagnated |= info.stagnated

        Z_old = Z
        Z = prox(penalty, U + Phi, eta)
        Phi = Phi + (U - Z)
        if not (np.isfinite(U).all() and np.isfinite(Phi).all()):
            raise NumericalError(f"non-finite ADMM iterate at iteration {it}")

        r = _norm(U - Z)
        s = _norm(Z - Z_old) / eta
        state.iteration = it
        state.primal_residual, state.dual_residual = r, s
        eps_pri = scale_abs + cfg.eps_rel * max(_norm(U), _norm(Z))
        eps_dual = scale_abs + cfg.eps_rel * _norm(Phi) / eta
        if r <= eps_pri and s <= eps_dual:
            state.converged = True
            break
        if cfg.adaptive:
            # eta is the inverse penalty parameter; Phi = eta * (unscaled dual)
            if r > cfg.mu * s:
                eta /= cfg.tau
                Phi = Phi / cfg.tau
            elif s > cfg.mu * r:
                eta *= cfg.tau
                Phi = Phi * cfg.tau
            sub.eta = eta

    state.U, state.Z, state.Phi, state.eta = U, Z, Phi, eta
    return Z, state

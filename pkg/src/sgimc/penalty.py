"""Penalties on coefficient factors and their proximal maps."""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class PenaltyKind(str, Enum):
    GROUP = "group"
    FROBENIUS = "frobenius"
    L1 = "l1"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"group_l21": cls.GROUP, "l21": cls.GROUP, "l2,1": cls.GROUP,
                   "frobeniussq": cls.FROBENIUS, "ridge": cls.FROBENIUS,
                   "l2": cls.FROBENIUS}
        key = str(value).lower()
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class Penalty:
    """``lam * R(Z)`` with R the row-wise l2,1 norm, squared Frobenius norm or l1 norm."""

    kind: PenaltyKind = PenaltyKind.GROUP
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind.parse(self.kind))
        if not self.lam >= 0:
            raise ValueError(f"penalty coefficient must be nonnegative, got {self.lam}")


def row_norms(Z):
    return np.sqrt(np.einsum("ij,ij->i", Z, Z))


def penalty_value(penalty, Z):
    Z = np.asarray(Z, dtype=np.float64)
    if penalty.kind is PenaltyKind.GROUP:
        r = row_norms(Z).sum()
    elif penalty.kind is PenaltyKind.FROBENIUS:
        r = np.einsum("ij,ij->", Z, Z)
    else:
        r = np.abs(Z).sum()
    return float(penalty.lam * r)


def group_shrink(A, nu):
    """Row-wise group shrinkage ``(1 - nu / ||a||)_+ a``; zero rows stay zero."""
    A = np.asarray(A, dtype=np.float64)
    norms = row_norms(A)
    scale = np.zeros_like(norms)
    nz = norms > nu
    scale[nz] = 1.0 - nu / norms[nz]
    return A * scale[:, None]


def soft_threshold(A, nu):
    A = np.asarray(A, dtype=np.float64)
    return np.sign(A) * np.maximum(np.abs(A) - nu, 0.0)


def prox(penalty, A, step):
    """Return ``argmin_Z step * lam * R(Z) + 0.5 ||Z - A||_F^2``."""
    if not step > 0:
        raise ValueError(f"prox step must be positive, got {step}")
    A = np.asarray(A, dtype=np.float64)
    nu = step * penalty.lam
    if nu == 0.0:
        return A.copy()
    if penalty.kind is PenaltyKind.GROUP:
        return group_shrink(A, nu)
    if penalty.kind is PenaltyKind.FROBENIUS:
        return A / (1.0 + 2.0 * nu)
    return soft_threshold(A, nu)


def default_threshold(Z):
    norms = row_norms(np.asarray(Z, dtype=np.float64))
    top = norms.max() if norms.size else 0.0
    return 1e-6 * (top if top > 0 else 1.0)


def active_rows(Z, threshold=None):
    """Indices of rows whose l2 norm exceeds ``threshold`` (the selected features)."""
    Z = np.asarray(Z, dtype=np.float64)
    if threshold is None:
        threshold = default_threshold(Z)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return np.flatnonzero(row_norms(Z) > threshold)

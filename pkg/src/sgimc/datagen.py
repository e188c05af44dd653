"""Synthetic instances: ``M = X U V^T Y^T + noise`` with identity-block factors."""

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .sparse import OmegaSparseMatrix
from .solver import Problem

DEFAULT_NOISE_VAR = 0.005
DEFAULT_FEATURE_VAR = 0.05

RHO_GRID = tuple(round(0.0005 + 0.0015 * i, 4) for i in range(14))
FEATURE_GRID = tuple(range(50, 401, 50))


def _sd(param, convention):
    if convention == "variance":
        return math.sqrt(param)
    if convention == "sd":
        return param
    raise ValueError(f"convention must be 'variance' or 'sd', got {convention!r}")


@dataclass(frozen=True)
class SynthSpec:
    """Size and noise of one synthetic instance.

    ``noise_sd``/``feature_sd`` are standard deviations. The defaults read
    N(0, 0.005) / N(0, 0.05) as variances; use
    :meth:`with_convention` for the other reading.
    """

    n1: int = 800
    n2: int = 1600
    d: int = 100
    k: int = 25
    rho: float = 0.02
    noise_sd: float = math.sqrt(DEFAULT_NOISE_VAR)
    feature_sd: float = math.sqrt(DEFAULT_FEATURE_VAR)
    seed: int = 0
    d2: int = None

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if not 1 <= self.k <= min(self.d, self.d_cols):
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.d}, d2={self.d_cols}")
        if self.n_obs == 0:
            raise ValueError("spec observes no entries (rho * n1 * n2 rounds to 0)")

    @property
    def d_cols(self):
        return self.d if self.d2 is None else self.d2

    @property
    def n_obs(self):
        return int(round(self.rho * self.n1 * self.n2))

    def with_convention(self, convention, noise=DEFAULT_NOISE_VAR, feature=DEFAULT_FEATURE_VAR):
        return replace(self, noise_sd=_sd(noise, convention),
                       feature_sd=_sd(feature, convention))

    def to_dict(self):
        return asdict(self)


@dataclass
class Instance:
    spec: SynthSpec
    problem: Problem
    M_full: np.ndarray
    signal: np.ndarray
    U_true: np.ndarray
    V_true: np.ndarray

    @property
    def unobserved_mask(self):
        mask = np.ones(self.M_full.shape, dtype=bool)
        mask[self.problem.M.rows, self.problem.M.cols] = False
        return mask


def identity_factor(d, k):
    return np.eye(d, k)


def sample_omega(n1, n2, m, rng):
    """``m`` distinct cells drawn uniformly without replacement.

    Taken as a prefix of one random permutation, so with a fixed generator
    state a denser sample contains every sparser one.
    """
    flat = rng.permutation(n1 * n2)[:m]
    return np.divmod(flat, n2)


def generate(spec):
    rng = np.random.default_rng(spec.seed)
    X = rng.normal(0.0, spec.feature_sd, size=(spec.n1, spec.d))
    Y = rng.normal(0.0, spec.feature_sd, size=(spec.n2, spec.d_cols))
    U = identity_factor(spec.d, spec.k)
    V = identity_factor(spec.d_cols, spec.k)
    signal = (X @ U) @ (Y @ V).T
    M_full = signal + rng.normal(0.0, spec.noise_sd, size=signal.shape)
    rows, cols = sample_omega(spec.n1, spec.n2, spec.n_obs, rng)
    M = OmegaSparseMatrix(rows, cols, M_full[rows, cols], M_full.shape)
    return Instance(spec, Problem(M, X, Y), M_full, signal, U, V)


def _scaled(n, scale):
    return max(1, int(round(n * scale)))


def sweep_specs(kind, scale=1.0, seed=0, only=None, **overrides):
    """The standard density and feature grids; ``scale`` shrinks n1, n2, d and k proportionally.

    ``only`` selects grid indices before the specs are built, so points that
    are degenerate at a small scale do not have to be valid.
    """
    base = dict(n1=_scaled(800, scale), n2=_scaled(1600, scale), k=_scaled(25, scale),
                seed=seed)
    base.update(overrides)
    if kind in ("rho", "rho_sweep"):
        points = [dict(d=_scaled(100, scale), rho=rho) for rho in RHO_GRID]
    elif kind in ("feature", "features", "feature_sweep"):
        rho = base.pop("rho", 0.2)
        points = [dict(d=_scaled(d, scale), rho=rho) for d in FEATURE_GRID]
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    if only is not None:
        points = [points[i] for i in only]
    return [SynthSpec(**{**base, **pt}) for pt in points]


def add_noise_features(F, n_extra, sd, rng):
    """Append ``n_extra`` i.i.d. N(0, sd^2) columns to a dense feature matrix."""
    if n_extra == 0:
        return np.asarray(F, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    return np.hstack([F, rng.normal(0.0, sd, size=(F.shape[0], n_extra))])


def clustered_items(n, n_classes, d_informative, rng, separation=1.0, spread=1.0):
    """Items from a Gaussian mixture: returns ``(features, labels)``.

    Class centers are drawn with norm ``separation`` per coordinate scale;
    within-class scatter has standard deviation ``spread``.
    """
    centers = rng.normal(0.0, separation, size=(n_classes, d_informative))
    labels = rng.integers(0, n_classes, size=n)
    feats = centers[labels] + rng.normal(0.0, spread, size=(n, d_informative))
    return feats, labels

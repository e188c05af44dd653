"""Sparse group inductive matrix completion.

Fits ``M ~ X U V^T Y^T`` on observed entries of ``M`` with row-sparsity
(group lasso) penalties on ``U`` and ``V``, so the fitted factors select
side features.
"""

from .admm import AdmmConfig, NewtonConfig, admm_solve
from .datagen import SynthSpec, generate, sweep_specs
from .evaluation import (GridSpec, metric_accuracy, metric_f1, metric_rel_error,
                         run_experiment, select_lambda)
from .exceptions import ColdStartError, DimensionError, LabelError, NumericalError, SGIMCError
from .io import DatasetBundle, load_model, load_problem, save_model
from .loss import LossKind
from .penalty import Penalty, PenaltyKind, active_rows, prox
from .solver import (FactorPair, FitReport, Problem, SolveConfig, fit, objective_full, predict,
                     predict_full)
from .sparse import (BACKEND, OmegaSparseMatrix, relative_frobenius_distance, sandwich_contract,
                     sandwich_expand)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "NewtonConfig", "admm_solve",
    "SynthSpec", "generate", "sweep_specs",
    "GridSpec", "metric_accuracy", "metric_f1", "metric_rel_error", "run_experiment",
    "select_lambda",
    "ColdStartError", "DimensionError", "LabelError", "NumericalError", "SGIMCError",
    "DatasetBundle", "load_model", "load_problem", "save_model",
    "LossKind", "Penalty", "PenaltyKind", "active_rows", "prox",
    "FactorPair", "FitReport", "Problem", "SolveConfig", "fit", "objective_full", "predict",
    "predict_full",
    "BACKEND", "OmegaSparseMatrix", "relative_frobenius_distance", "sandwich_contract",
    "sandwich_expand",
]

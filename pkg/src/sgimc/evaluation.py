"""Metrics, validation-based penalty selection and the experiment harness."""

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import datagen
from .admm import AdmmConfig, NewtonConfig
from .exceptions import SGIMCError
from .io import build_pair_similarity
from .loss import LossKind
from .penalty import PenaltyKind, active_rows
from .solver import Problem, SolveConfig, fit, predict, predict_full
from .sparse import relative_frobenius_distance

CSV_COLUMNS = ("experiment", "method", "n1", "n2", "d", "k_true", "k_fit", "rho",
               "lambda", "seed", "metric", "value", "seconds", "status")

METHODS = {
    "sgimc": (PenaltyKind.GROUP, False),
    "imc": (PenaltyKind.FROBENIUS, False),
    "sgimc-comb": (PenaltyKind.GROUP, True),
    "imc-comb": (PenaltyKind.FROBENIUS, True),
}
_METHOD_ALIASES = {"imc-frobenius": "imc", "imc_frobenius": "imc", "sgimc_comb": "sgimc-comb",
                   "imc_comb": "imc-comb"}


def method_name(method):
    m = str(method).lower()
    m = _METHOD_ALIASES.get(m, m)
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    return m


# -- metrics -----------------------------------------------------------------

def metric_rel_error(M_hat, M):
    return relative_frobenius_distance(M_hat, M)


def _signs(pred):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    return np.where(pred >= 0, 1.0, -1.0)


def _check_pair(pred, labels):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("empty input")
    if pred.shape != labels.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {labels.size} labels")
    if not np.isin(labels, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    return pred, labels


def metric_accuracy(pred, labels):
    """Fraction of sign agreements; a zero prediction counts as +1."""
    pred, labels = _check_pair(pred, labels)
    return float(np.mean(_signs(pred) == labels))


def metric_f1(pred, labels, positive=1.0):
    pred, labels = _check_pair(pred, labels)
    yhat = _signs(pred) == positive
    y = labels == positive
    tp = np.sum(yhat & y)
    fp = np.sum(yhat & ~y)
    fn = np.sum(~yhat & y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def validation_score(loss, y, p):
    """Lower is better: relative error (squared loss) or 1 - accuracy (logistic)."""
    if LossKind.parse(loss) is LossKind.LOGISTIC:
        return 1.0 - metric_accuracy(p, y)
    return float(np.linalg.norm(p - y) / max(np.linalg.norm(y), np.finfo(float).tiny))


# -- lambda selection --------------------------------------------------------

@dataclass
class GridSpec:
    """Penalty grid. With ``per_observation`` the solver receives
    ``lambda * |Omega_train|``, i.e. the grid is stated for the mean loss."""

    lambdas: tuple = (1e-5, 1e-4, 1e-3, 1e-2)
    tie: bool = True
    ranks: tuple = (20, 30)
    validation_fraction: float = 0.2
    seeds: tuple = (0, 1, 2, 3, 4)
    per_observation: bool = True

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.ranks = tuple(int(r) for r in self.ranks)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not (self.lambdas and self.ranks and self.seeds):
            raise ValueError("grid lists must be nonempty")
        if any(v <= 0 for v in self.lambdas):
            raise ValueError("grid lambdas must be positive")
        if not 0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5]")

    def lambda_values(self):
        return tuple(sorted(set(self.lambdas)))

    def candidates(self):
        lams = self.lambda_values()
        if self.tie:
            return [(v, v) for v in lams]
        return list(itertools.product(lams, lams))

    def scaled_ranks(self, scale):
        return tuple(sorted({max(1, int(round(r * scale))) for r in self.ranks}))


def split_omega(n_obs, fraction, seed):
    """Disjoint (train, validation) position arrays covering ``range(n_obs)``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_obs)
    n_val = int(round(fraction * n_obs))
    if n_obs - n_val < 1 or n_val < 1:
        raise ValueError(f"cannot split {n_obs} observations with fraction {fraction}")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass
class Selection:
    best: tuple
    table: list
    fit: object
    train_index: np.ndarray
    val_index: np.ndarray

    @property
    def best_lambda(self):
        return self.best[0] if self.best[0] == self.best[1] else self.best


def _with_lambdas(cfg, lam_u, lam_v, n_obs, per_observation):
    scale = n_obs if per_observation else 1.0
    out = replace(cfg, lam_u=lam_u * scale, lam_v=lam_v * scale)
    if cfg.combined:
        out = replace(out, lam_ut=cfg.lam_ut * scale, lam_vt=cfg.lam_vt * scale)
    return out


def select_lambda(prob, grid, cfg, seed=0):
    """Fit every grid candidate on a training part of Omega, score on the rest.

    Ties go to the larger penalty. Only observed entries are touched.
    """
    train, val = split_omega(prob.M.nnz, grid.validation_fraction, seed)
    if np.intersect1d(train, val).size or train.size + val.size != prob.M.nnz:
        raise SGIMCError("train/validation split is not a partition of Omega")
    train_prob = prob.with_observations(prob.M.subset(train))
    val_M = prob.M.subset(val)
    pairs = np.column_stack([val_M.rows, val_M.cols])

    table, best, best_key, best_fit = [], None, None, None
    for lam_u, lam_v in grid.candidates():
        c = _with_lambdas(cfg, lam_u, lam_v, train_prob.M.nnz, grid.per_observation)
        try:
            f, _ = fit(train_prob, c)
            p = predict(f, prob.X, prob.Y, pairs)
            score = validation_score(prob.loss, val_M.values, p)
            if not math.isfinite(score):
                raise SGIMCError("non-finite validation score")
        except (SGIMCError, FloatingPointError, np.linalg.LinAlgError) as exc:
            table.append({"lambda_u": lam_u, "lambda_v": lam_v, "score": None,
                          "status": f"error:{type(exc).__name__}"})
            continue
        table.append({"lambda_u": lam_u, "lambda_v": lam_v, "score": score, "status": "ok"})
        key = (score, -(lam_u + lam_v))
        if best_key is None or key < best_key:
            best, best_key, best_fit = (lam_u, lam_v), key, f
    if best is None:
        raise SGIMCError(f"all {len(table)} grid fits failed: "
                         + ", ".join(r["status"] for r in table))
    return Selection(best, table, best_fit, train, val)


# -- experiments -------------------------------------------------------------

# Sweeps run hundreds of fits, so they use residual-balanced ADMM steps,
# u-steps solved to 1e-4 and a longer sweep budget than a single fit.
EXPERIMENT_DEFAULTS = {
    "outer_max_iter": 300,
    "admm": {"adaptive": True},
    "newton": {"tol": 1e-4},
}


def experiment_config(**overrides):
    """SolveConfig with the sweep defaults; keyword arguments win."""
    d = {k: (dict(v) if isinstance(v, dict) else v) for k, v in EXPERIMENT_DEFAULTS.items()}
    for key in ("admm", "newton"):
        extra = overrides.pop(key, None)
        if isinstance(extra, (AdmmConfig, NewtonConfig)):
            extra = asdict(extra)
        d[key].update(extra or {})
    d.update(overrides)
    return SolveConfig.from_dict(d)


@dataclass
class ExperimentRecord:
    experiment: str
    method: str
    n1: int
    n2: int
    d: int
    k_true: int
    k_fit: int
    rho: float
    lam: float
    seed: int
    metric: str
    value: float
    seconds: float = 0.0
    status: str = "ok"

    def row(self):
        g = lambda v: format(v, ".10g")
        return [self.experiment, self.method, self.n1, self.n2, self.d, self.k_true,
                self.k_fit, g(self.rho), g(self.lam), self.seed, self.metric,
                format(self.value, ".17g"), format(self.seconds, ".6f"), self.status]


@dataclass(frozen=True)
class SemiSpec:
    """Pair-similarity task on Gaussian-mixture items with added noise features."""

    n: int = 300
    n_classes: int = 4
    d_informative: int = 6
    n_noise: int = 0
    train_fraction: float = 0.005
    separation: float = 3.0
    spread: float = 1.0
    seed: int = 0

    def to_dict(self):
        return asdict(self)


NOISE_GRID = (0, 50, 100, 200, 300, 400)


def semisynthetic_specs(scale=0.25, seed=0, noise_grid=NOISE_GRID, **overrides):
    base = dict(n=max(4, int(round(1200 * scale))), seed=seed)
    base.update(overrides)
    return [SemiSpec(n_noise=m, **base) for m in noise_grid]


def make_semisynthetic(spec):
    """Returns ``(Problem on the train pairs, PairSplit, labels)``.

    The informative features and labels do not depend on ``n_noise``, so
    specs differing only in the noise count share the same items.
    """
    rng = np.random.default_rng(spec.seed)
    feats, labels = datagen.clustered_items(spec.n, spec.n_classes, spec.d_informative, rng,
                                            separation=spec.separation, spread=spec.spread)
    split = build_pair_similarity(labels, spec.train_fraction, seed=spec.seed)
    noise_rng = np.random.default_rng([spec.seed, 1])
    X = datagen.add_noise_features(feats, spec.n_noise, spec.spread, noise_rng)
    return Problem(split.train, X, X, LossKind.LOGISTIC), split


def _method_cfg(cfg, method, rank):
    kind, combined = METHODS[method]
    return replace(cfg, k=rank, penalty_u=kind, penalty_v=kind, combined=combined)


def _finish_fit(prob, sel, c, grid):
    """Refit on all observed entries at the selected penalty, warm from the selection fit."""
    lam_u, lam_v = sel.best
    c = _with_lambdas(c, lam_u, lam_v, prob.M.nnz, grid.per_observation)
    f, report = fit(prob, c, init=sel.fit)
    return f, report


def _synthetic_job(args):
    experiment, spec, method, rank, grid, cfg, metrics, target, timings = args
    t0 = time.perf_counter()
    base = dict(experiment=experiment, method=method, n1=spec.n1, n2=spec.n2, d=spec.d,
                k_true=spec.k, k_fit=rank, rho=spec.rho, seed=spec.seed)
    try:
        inst = datagen.generate(spec)
        prob = inst.problem
        c = _method_cfg(cfg, method, rank)
        sel = select_lambda(prob, grid, c, seed=spec.seed)
        f, _ = _finish_fit(prob, sel, c, grid)
        M_hat = predict_full(f, prob.X, prob.Y)
        mask = inst.unobserved_mask
        truth = inst.signal if target == "signal" else inst.M_full
        informative = np.arange(spec.k)
        values = {
            "rel_error": metric_rel_error(M_hat[mask], truth[mask]),
            "n_active_u": float(len(active_rows(f.U))),
            "n_active_v": float(len(active_rows(f.V))),
            "informative_recall": float(np.mean(np.isin(informative, active_rows(f.U)))
                                        * 0.5 + np.mean(np.isin(informative, active_rows(f.V)))
                                        * 0.5),
        }
        lam, status = sel.best_lambda, "ok"
    except (SGIMCError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        values, lam, status = {}, float("nan"), f"error:{type(exc).__name__}"
    seconds = time.perf_counter() - t0 if timings else 0.0
    return [ExperimentRecord(**base, lam=lam if not isinstance(lam, tuple) else lam[0],
                             metric=m, value=values.get(m, float("nan")),
                             seconds=seconds, status=status)
            for m in metrics]


def _semisynthetic_job(args):
    experiment, spec, method, rank, grid, cfg, metrics, _, timings = args
    t0 = time.perf_counter()
    base = dict(experiment=experiment, method=method, n1=spec.n, n2=spec.n,
                d=spec.d_informative + spec.n_noise, k_true=spec.n_classes, k_fit=rank,
                rho=spec.train_fraction, seed=spec.seed)
    try:
        prob, split = make_semisynthetic(spec)
        c = _method_cfg(cfg, method, rank)
        sel = select_lambda(prob, grid, c, seed=spec.seed)
        f, _ = _finish_fit(prob, sel, c, grid)
        pairs = np.column_stack([split.test.rows, split.test.cols])
        p = predict(f, prob.X, prob.Y, pairs)
        values = {
            "accuracy": metric_accuracy(p, split.test.values),
            "f1": metric_f1(p, split.test.values),
            "n_active_u": float(len(active_rows(f.U))),
            "n_active_v": float(len(active_rows(f.V))),
        }
        lam, status = sel.best_lambda, "ok"
    except (SGIMCError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        values, lam, status = {}, float("nan"), f"error:{type(exc).__name__}"
    seconds = time.perf_counter() - t0 if timings else 0.0
    return [ExperimentRecord(**base, lam=lam if not isinstance(lam, tuple) else lam[0],
                             metric=m, value=values.get(m, float("nan")),
                             seconds=seconds, status=status)
            for m in metrics]


EXPERIMENTS = {
    "rho_sweep": ("rho", _synthetic_job, ("rel_error",)),
    "feature_sweep": ("feature", _synthetic_job, ("rel_error",)),
    "semisynthetic_noise": (None, _semisynthetic_job, ("accuracy",)),
}


def experiment_jobs(kind, scale=0.25, methods=("sgimc", "imc"), grid=None, cfg=None,
                    seeds=None, ranks=None, only=None, metrics=None, target="signal",
                    timings=True, spec_overrides=None):
    if kind not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {kind!r}; choose from {sorted(EXPERIMENTS)}")
    sweep, job, default_metrics = EXPERIMENTS[kind]
    grid = grid or GridSpec()
    cfg = cfg or experiment_config()
    seeds = tuple(seeds) if seeds is not None else grid.seeds
    metrics = tuple(metrics) if metrics else default_metrics
    methods = [method_name(m) for m in methods]
    overrides = dict(spec_overrides or {})

    if sweep is None:
        specs = semisynthetic_specs(scale, **overrides)
        if ranks is None:
            ranks = (specs[0].n_classes,)
    else:
        specs = datagen.sweep_specs(sweep, scale, only=only, **overrides)
        if ranks is None:
            ranks = (max(grid.scaled_ranks(scale)),)
        only = None
    if only is not None:
        specs = [specs[i] for i in only]

    jobs = []
    for spec in specs:
        for method in methods:
            for seed in seeds:
                for rank in ranks:
                    jobs.append((kind, replace(spec, seed=seed), method, rank, grid, cfg,
                                 metrics, target, timings))
    return job, jobs, specs


def run_experiment(kind, out=None, scale=0.25, methods=("sgimc", "imc"), grid=None,
                   cfg=None, seeds=None, ranks=None, only=None, metrics=None,
                   target="signal", threads=1, timings=True, spec_overrides=None):
    """Run a sweep and (optionally) write ``out`` as CSV plus a ``.json`` sidecar.

    One job per spec x method x seed x rank; rows come out in that order
    regardless of ``threads``. Failed jobs produce rows with an ``error:``
    status instead of aborting the run.
    """
    grid = grid or GridSpec()
    cfg = cfg or experiment_config()
    job, jobs, specs = experiment_jobs(kind, scale, methods, grid, cfg, seeds, ranks, only,
                                       metrics, target, timings, spec_overrides)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(a) for a in jobs]
    records = [r for rs in results for r in rs]

    if out is not None:
        out = Path(out)
        write_csv(out, records)
        sidecar = {
            "experiment": kind,
            "scale": scale,
            "methods": [method_name(m) for m in methods],
            "seeds": list(seeds) if seeds is not None else list(grid.seeds),
            "ranks": sorted({a[3] for a in jobs}),
            "metrics": list(jobs[0][6]) if jobs else [],
            "target": target,
            "grid": asdict(grid),
            "solve_config": cfg.to_dict(),
            "specs": [s.to_dict() for s in specs],
        }
        out.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return records


def write_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

"""Acceptance criteria 1-9, each checked at its stated tolerance.

Every test prints one ``ACCEPTANCE <n>: PASS|FAIL`` line (also collected
into the terminal summary) and then asserts the same verdict.
"""

import time

import numpy as np
import pytest

from _oracles import (dense_contract, dense_expand, finite_difference_gradient,
                      proximal_gradient, random_omega, rel_err)
from sgimc import evaluation
from sgimc.admm import AdmmConfig, NewtonConfig, admm_solve, partial_objective
from sgimc.cli import main
from sgimc.penalty import Penalty, group_shrink, prox, row_norms
from sgimc.solver import Problem, SolveConfig, fit, init_factors, objective_full
from sgimc.sparse import sandwich_contract, sandwich_expand
from sgimc.subproblem import PartialProblem, gradient, hess_vec, objective

pytestmark = pytest.mark.acceptance

VERDICTS = {}


def verdict(capsys, n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    VERDICTS[n] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_kernel_oracle(capsys):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n1, n2 = rng.integers(1, 21, size=2)
        d, k = rng.integers(1, 9), rng.integers(1, 5)
        m = int(rng.integers(1, n1 * n2 + 1))
        S = random_omega(rng, n1, n2, m)
        X, Q = rng.normal(size=(n1, d)), rng.normal(size=(n2, k))
        D = rng.normal(size=(d, k))
        worst = max(worst, rel_err(sandwich_contract(X, S, Q), dense_contract(X, S, Q)),
                    rel_err(sandwich_expand(X, D, Q, S).values, dense_expand(X, D, Q, S)))
    dt = time.perf_counter() - t0
    verdict(capsys, 1, worst < 1e-10 and dt < 5.0,
            f"max rel err {worst:.2e} < 1e-10, {dt:.2f}s < 5s")


def _random_partial(rng, loss):
    n1, n2 = rng.integers(3, 9, size=2)
    d, k = rng.integers(1, 5), rng.integers(1, 4)
    m = int(rng.integers(1, n1 * n2 + 1))
    M = random_omega(rng, n1, n2, m)
    if loss == "logistic":
        M = M.with_values(np.where(rng.random(m) < 0.5, -1.0, 1.0))
    return PartialProblem(M, rng.normal(size=(n1, d)), rng.normal(size=(n2, k)), loss,
                          lam_r=float(rng.uniform(0, 1)), eta=float(rng.uniform(0.5, 2)),
                          target=rng.normal(size=(d, k)))


def test_criterion_2_calculus(capsys):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    g_worst = h_worst = 0.0
    for loss in ("squared", "logistic"):
        for _ in range(50):
            pp = _random_partial(rng, loss)
            U = rng.normal(size=(pp.d, pp.k))
            D = rng.normal(size=(pp.d, pp.k))
            fd = finite_difference_gradient(lambda W: objective(pp, W), U)
            g_worst = max(g_worst, rel_err(gradient(pp, U), fd))
            h = 1e-5
            fd_h = (gradient(pp, U + h * D) - gradient(pp, U - h * D)) / (2 * h)
            h_worst = max(h_worst, rel_err(hess_vec(pp, U, D), fd_h))
    dt = time.perf_counter() - t0
    verdict(capsys, 2, g_worst < 1e-5 and h_worst < 1e-4 and dt < 30.0,
            f"gradient {g_worst:.2e} < 1e-5, hessvec {h_worst:.2e} < 1e-4, {dt:.2f}s < 30s")


def test_criterion_3_prox(capsys):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    closed_form = optimal = nonexpansive = True
    for _ in range(1000):
        d, k = rng.integers(1, 8), rng.integers(1, 5)
        A = rng.normal(size=(d, k)) * rng.choice([1e-3, 1.0, 1e3])
        B = rng.normal(size=(d, k))
        nu = float(rng.exponential())
        Z = group_shrink(A, nu)
        norms = row_norms(A)
        scale = np.where(norms > nu, 1.0 - nu / np.where(norms > 0, norms, 1.0), 0.0)
        closed_form &= np.array_equal(Z, scale[:, None] * A)
        # optimality: A - Z is a subgradient of nu * ||.||_{2,1} at Z
        G = A - Z
        zn = row_norms(Z)
        on = zn > 0
        optimal &= bool(np.allclose(G[on], nu * Z[on] / zn[on, None], atol=1e-9 * (1 + nu)))
        optimal &= bool(np.all(row_norms(G[~on]) <= nu * (1 + 1e-12)))
        pen = Penalty("group", nu)
        P, R = prox(pen, A, 1.0), prox(pen, B, 1.0)
        nonexpansive &= bool(np.linalg.norm(P - R) <= np.linalg.norm(A - B) * (1 + 1e-12))
        nonexpansive &= bool(np.vdot(P - R, A - B) >= np.linalg.norm(P - R) ** 2 - 1e-9)
    dt = time.perf_counter() - t0
    verdict(capsys, 3, closed_form and optimal and nonexpansive and dt < 5.0,
            f"closed form exact={closed_form}, optimality={optimal}, "
            f"nonexpansive={nonexpansive}, {dt:.2f}s < 5s")


def test_criterion_4_admm_oracle(capsys):
    rng = np.random.default_rng(4)
    cfg = AdmmConfig(eps_abs=1e-10, eps_rel=1e-10, max_iter=5000)
    newton = NewtonConfig(tol=1e-12)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        d, k = rng.integers(1, 5), rng.integers(1, 3)
        n1, n2 = rng.integers(2, 6), rng.integers(2, 6)
        m = int(rng.integers(1, min(12, n1 * n2) + 1))
        pp = PartialProblem(random_omega(rng, n1, n2, m), rng.normal(size=(n1, d)),
                            rng.normal(size=(n2, k)), "squared",
                            lam_r=float(rng.uniform(0, 0.5)), eta=np.inf)
        pen = Penalty("group", float(rng.uniform(0.05, 1.0)))
        Z, _ = admm_solve(pp, pen, cfg, newton=newton)
        _, oracle = proximal_gradient(pp, pen, n_iter=100_000)
        worst = max(worst, abs(partial_objective(pp, pen, Z) - oracle))
    dt = time.perf_counter() - t0
    verdict(capsys, 4, worst <= 1e-5 and dt < 60.0,
            f"max |objective gap| {worst:.2e} <= 1e-5, {dt:.1f}s < 60s")


def test_criterion_5_outer_loop(capsys):
    rng = np.random.default_rng(5)
    tight = dict(outer_tol=1e-9, outer_max_iter=500,
                 admm=AdmmConfig(eps_abs=1e-9, eps_rel=1e-9, max_iter=500, adaptive=True),
                 newton=NewtonConfig(tol=1e-10))
    worst_rise, worst_sym = -np.inf, 0.0
    for i in range(10):
        loss = ("squared", "logistic")[i % 2]
        pen = ("group", "frobenius", "l1")[i % 3]
        n1, n2, d1, d2 = rng.integers(6, 12), rng.integers(6, 12), rng.integers(2, 5), \
            rng.integers(2, 5)
        M = random_omega(rng, n1, n2, int(0.5 * n1 * n2))
        if loss == "logistic":
            M = M.with_values(np.where(M.values >= 0, 1.0, -1.0))
        prob = Problem(M, rng.normal(size=(n1, d1)), rng.normal(size=(n2, d2)), loss)
        cfg = SolveConfig(k=2, lam_u=float(rng.uniform(0.05, 0.5)),
                          lam_v=float(rng.uniform(0.05, 0.5)), penalty_u=pen, penalty_v=pen,
                          combined=(i == 9), **tight)
        f0 = init_factors(prob, cfg)
        f, report = fit(prob, cfg, init=f0)
        worst_rise = max(worst_rise, float(np.max(np.diff(report.objective))))
        g, _ = fit(prob.transpose(), cfg.transposed(), init=f0.transpose())
        a = objective_full(prob, f, cfg)
        b = objective_full(prob.transpose(), g, cfg.transposed())
        worst_sym = max(worst_sym, abs(a - b) / max(1.0, abs(a)))
    verdict(capsys, 5, worst_rise <= 1e-8 and worst_sym <= 1e-8,
            f"max per-sweep rise {worst_rise:.2e} <= 1e-8, "
            f"transposition gap {worst_sym:.2e} <= 1e-8")


SEEDS = (0, 1, 2, 3, 4)


def _by(records, metric):
    out = {}
    for r in records:
        if r.metric == metric:
            out[(r.method, r.seed, r.d, r.rho)] = r.value
    return out


def test_criterion_6_density_trend(capsys):
    t0 = time.perf_counter()
    records = evaluation.run_experiment("rho_sweep", scale=0.25, methods=["sgimc"],
                                        seeds=SEEDS, metrics=["rel_error"],
                                        cfg=evaluation.experiment_config())
    dt = time.perf_counter() - t0
    err = _by(records, "rel_error")
    rhos = sorted({key[3] for key in err})
    monotone, final = [], []
    for s in SEEDS:
        curve = np.array([err[("sgimc", s, 25, r)] for r in rhos])
        monotone.append(bool(np.all(np.diff(curve) <= 0)))
        final.append(curve[-1])
    n_mono = sum(monotone)
    mean_final = float(np.mean(final))
    ok = n_mono >= 4 and mean_final < 0.05 and dt < 600
    verdict(capsys, 6, ok,
            f"monotone seeds {n_mono}/5 >= 4, error at rho=0.02 {mean_final:.3f} < 0.05 "
            f"(per seed {', '.join(f'{v:.3f}' for v in final)}), {dt:.0f}s < 600s")


def test_criterion_7_redundant_features(capsys):
    t0 = time.perf_counter()
    records = evaluation.run_experiment("feature_sweep", scale=0.25, methods=["sgimc", "imc"],
                                        seeds=SEEDS, only=[0, 7],
                                        metrics=["rel_error", "informative_recall"],
                                        cfg=evaluation.experiment_config())
    dt = time.perf_counter() - t0
    err = _by(records, "rel_error")
    recall = _by(records, "informative_recall")
    good, ratios, full_recall = 0, [], True
    for s in SEEDS:
        sg = err[("sgimc", s, 100, 0.2)] / err[("sgimc", s, 12, 0.2)]
        im = err[("imc", s, 100, 0.2)] / err[("imc", s, 12, 0.2)]
        ratios.append((sg, im))
        good += sg < 2.0 and im >= sg
        full_recall &= recall[("sgimc", s, 100, 0.2)] == 1.0
    ok = good >= 4 and full_recall and dt < 900
    verdict(capsys, 7, ok,
            f"seeds with SGIMC ratio < 2 and IMC ratio >= SGIMC ratio {good}/5 >= 4 "
            f"[{'; '.join(f'{a:.2f} vs {b:.2f}' for a, b in ratios)}], "
            f"informative rows recovered={full_recall}, {dt:.0f}s < 900s")


def test_criterion_8_semisynthetic(capsys):
    records = evaluation.run_experiment("semisynthetic_noise", scale=0.25,
                                        methods=["sgimc", "imc"], seeds=SEEDS, only=[0, 3],
                                        metrics=["accuracy"],
                                        cfg=evaluation.experiment_config())
    acc = {}
    for r in records:
        acc[(r.method, r.seed, r.d)] = r.value
    d0 = min(k[2] for k in acc)
    d1 = max(k[2] for k in acc)
    wins, drops = 0, []
    for s in SEEDS:
        sg = acc[("sgimc", s, d0)] - acc[("sgimc", s, d1)]
        im = acc[("imc", s, d0)] - acc[("imc", s, d1)]
        drops.append((sg, im))
        wins += sg < im
    verdict(capsys, 8, wins >= 3 and d1 - d0 == 200,
            f"seeds where SGIMC drops less than IMC {wins}/5 >= 3 "
            f"[{'; '.join(f'{a:+.4f} vs {b:+.4f}' for a, b in drops)}]")


def test_criterion_9_determinism(capsys, tmp_path):
    argv = ["experiment", "rho_sweep", "--scale", "0.05", "--only", "12,13", "--seeds", "0,1",
            "--lambdas", "1e-4,1e-3", "--ranks", "2", "--no-timings"]
    with capsys.disabled():
        codes = [main(argv + ["--out", str(tmp_path / name)]) for name in ("a.csv", "b.csv")]
        codes.append(main(argv + ["--out", str(tmp_path / "c.csv"), "--threads", "2"]))
    a, b, c = ((tmp_path / n).read_bytes() for n in ("a.csv", "b.csv", "c.csv"))
    same = a == b == c
    verdict(capsys, 9, codes == [0, 0, 0] and same,
            f"exit codes {codes}, serial and parallel reruns byte-identical={same}")

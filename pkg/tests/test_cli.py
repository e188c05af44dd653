import csv
import json

import numpy as np
import pytest

from sgimc import io
from sgimc.cli import build_parser, main

SUBCOMMANDS = ["synth", "fit", "predict", "eval", "experiment"]


def _errline(capsys):
    err = capsys.readouterr().err
    lines = err.strip().splitlines()
    assert len(lines) == 1, err
    return lines[0]


@pytest.mark.parametrize("argv", [["--help"]] + [[c, "--help"] for c in SUBCOMMANDS])
def test_help_exits_zero(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 0
    assert "usage" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["fit", "--m", "a"],
                                  ["synth", "--out", "d", "--unknown-flag"],
                                  ["experiment", "nope", "--out", "x.csv"]])
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert _errline(capsys).startswith("error: usage: ")


@pytest.fixture
def instance(tmp_path):
    d = tmp_path / "inst"
    assert main(["synth", "--out", str(d), "--n1", "20", "--n2", "25", "--d", "5",
                 "--k", "2", "--rho", "0.4", "--seed", "3"]) == 0
    return d


def test_synth_single_instance(instance):
    manifest = json.loads((instance / "manifest.json").read_text())
    assert manifest["spec"]["n1"] == 20 and manifest["spec"]["seed"] == 3
    prob = io.load_problem(io.DatasetBundle(*(str(instance / n) for n in
                                              ("m.mtx", "x.txt", "y.txt"))))
    assert prob.M.nnz == 200
    assert io.read_dense(instance / "signal.txt").shape == (20, 25)


def test_synth_rho_sweep_quarter_scale(tmp_path):
    out = tmp_path / "sweep"
    assert main(["synth", "--scale", "0.25", "--sweep", "rho", "--out", str(out),
                 "--no-truth"]) == 0
    manifests = sorted(out.glob("*/manifest.json"))
    assert len(manifests) == 14
    rhos = [json.loads(p.read_text())["spec"]["rho"] for p in manifests]
    assert rhos == sorted(rhos) and rhos[-1] == 0.02
    assert not list(out.glob("*/signal.txt"))


def _fit(instance, tmp_path, *extra, name="model.sgimc"):
    out = tmp_path / name
    argv = ["fit", "--m", str(instance / "m.mtx"), "--x", str(instance / "x.txt"),
            "--y", str(instance / "y.txt"), "--out", str(out), *extra]
    return main(argv), out


def test_fit_report_objective_non_increasing(instance, tmp_path):
    code, out = _fit(instance, tmp_path, "--k", "2", "--penalty", "group",
                     "--lambda", "1e-3", "--max-iter", "20")
    assert code == 0
    report = json.loads((tmp_path / "model.sgimc.report.json").read_text())
    obj = np.array(report["objective"])
    assert len(obj) == report["n_sweeps"] + 1
    assert np.all(np.diff(obj) <= 1e-12 * np.abs(obj[:-1]))
    _, meta = io.load_model(out)
    assert meta["config"]["penalty_u"] == "group" and meta["config"]["lam_u"] == 1e-3


def test_predict_zero_model_outputs_zeros(instance, tmp_path, capsys):
    code, model = _fit(instance, tmp_path, "--k", "2", "--lambda", "1e9", "--max-iter", "3")
    assert code == 0
    f, _ = io.load_model(model)
    assert not f.U.any() and not f.V.any()
    io.write_pairs(tmp_path / "p.txt", [[0, 0], [3, 7], [19, 24]])
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--pairs", str(tmp_path / "p.txt")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [float(ln.split()[2]) for ln in lines] == [0.0, 0.0, 0.0]


def test_predict_then_eval(instance, tmp_path, capsys):
    _, model = _fit(instance, tmp_path, "--k", "2", "--lambda", "1e-4", "--max-iter", "30")
    S = io.read_dense(instance / "signal.txt")
    pairs = np.array([[i, j] for i in range(20) for j in range(25)])
    io.write_pairs(tmp_path / "p.txt", pairs)
    io.write_pairs(tmp_path / "truth.txt", pairs, S[pairs[:, 0], pairs[:, 1]])
    pred = tmp_path / "pred.txt"
    assert main(["predict", "--model", str(model), "--pairs", str(tmp_path / "p.txt"),
                 "--out", str(pred)]) == 0
    capsys.readouterr()
    assert main(["eval", "--pred", str(pred), "--truth", str(tmp_path / "truth.txt"),
                 "--metric", "rel_error"]) == 0
    result = json.loads(capsys.readouterr().out)
    _, values = io.read_pairs(pred)
    expected = np.linalg.norm(values - S.ravel()) / np.linalg.norm(S)
    assert result["rel_error"] == pytest.approx(expected, rel=1e-12)
    assert result["rel_error"] < 1.0


def test_eval_missing_prediction(tmp_path, capsys):
    io.write_pairs(tmp_path / "pred.txt", [[0, 0]], [1.0])
    io.write_pairs(tmp_path / "truth.txt", [[0, 0], [1, 1]], [1.0, -1.0])
    assert main(["eval", "--pred", str(tmp_path / "pred.txt"),
                 "--truth", str(tmp_path / "truth.txt"), "--metric", "accuracy"]) == 1
    assert _errline(capsys).startswith("error: format: ")


def test_runtime_error_exit_one(instance, tmp_path, capsys):
    io.write_dense(instance / "x.txt", np.ones((7, 5)))
    code, _ = _fit(instance, tmp_path, "--k", "2")
    assert code == 1
    line = _errline(capsys)
    assert line.startswith("error: dimension: ") and "x.txt" in line


def test_missing_file_exit_one(tmp_path, capsys):
    assert main(["predict", "--model", str(tmp_path / "absent"), "--pairs", "p"]) == 1
    assert _errline(capsys).startswith("error: io: ")


def test_config_overridden_by_flags(instance, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 3, "lam_u": 0.5, "lam_v": 0.5, "outer_max_iter": 4}))
    code, model = _fit(instance, tmp_path, "--config", str(cfg), "--k", "2")
    assert code == 0
    _, meta = io.load_model(model)
    assert meta["k"] == 2
    assert meta["config"]["lam_u"] == 0.5 and meta["config"]["outer_max_iter"] == 4


def test_config_unknown_key(instance, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kk": 3}))
    code, _ = _fit(instance, tmp_path, "--config", str(cfg))
    assert code == 1
    assert _errline(capsys).startswith("error: config: ")


def test_fit_deterministic(instance, tmp_path):
    args = ("--k", "2", "--lambda", "1e-3", "--max-iter", "10", "--seed", "7")
    _fit(instance, tmp_path, *args, name="a.sgimc")
    _fit(instance, tmp_path, *args, name="b.sgimc")
    assert (tmp_path / "a.sgimc").read_bytes() == (tmp_path / "b.sgimc").read_bytes()


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--out", str(tmp_path / name), "--scale", "0.05", "--seed", "2"])
    for f in ("m.mtx", "x.txt", "y.txt", "signal.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def _experiment(tmp_path, name, capsys=None):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"outer_max_iter": 15}))
    out = tmp_path / name
    code = main(["experiment", "rho_sweep", "--out", str(out), "--scale", "0.05",
                 "--only", "13", "--seeds", "0", "--ranks", "2", "--lambdas", "1e-3",
                 "--methods", "sgimc", "--no-timings", "--config", str(cfg)])
    return code, out


def test_experiment_deterministic(tmp_path):
    code, a = _experiment(tmp_path, "a.csv")
    assert code == 0
    _, b = _experiment(tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(open(a)))
    assert len(rows) == 1 and rows[0]["method"] == "sgimc" and rows[0]["status"] == "ok"
    side = json.loads(a.with_suffix(".json").read_text())
    assert side["solve_config"]["outer_max_iter"] == 15


def test_parser_has_common_flags():
    parser = build_parser()
    for cmd in SUBCOMMANDS:
        extra = ["rho_sweep"] if cmd == "experiment" else []
        required = {"synth": ["--out", "o"], "fit": ["--m", "a", "--x", "b", "--y", "c"],
                    "predict": ["--model", "m", "--pairs", "p"],
                    "eval": ["--pred", "p", "--truth", "t"],
                    "experiment": ["--out", "o"]}[cmd]
        args = parser.parse_args([cmd, *extra, *required, "--seed", "1", "--threads", "2"])
        assert args.seed == 1 and args.threads == 2

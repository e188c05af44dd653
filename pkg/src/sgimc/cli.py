"""Command-line front end: ``sgimc {synth,fit,predict,eval,experiment}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every failure
prints one ``error: <code>: <detail>`` line to stderr.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import datagen, evaluation, io, sparse
from .exceptions import (ColdStartError, DimensionError, LabelError, NumericalError,
                         SGIMCError)
from .solver import SolveConfig, fit, predict

_SOLVE_FIELDS = {f.name for f in fields(SolveConfig)}
_GRID_FIELDS = {f.name for f in fields(evaluation.GridSpec)}


class CliError(Exception):
    def __init__(self, code, detail, status=1):
        super().__init__(detail)
        self.code, self.detail, self.status = code, detail, status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", status=2)


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--threads", type=int, default=None, help="worker / kernel threads")
    p.add_argument("--config", default=None,
                   help="JSON file with SolveConfig fields (and a 'grid' object); "
                        "explicit flags take precedence")


def build_parser():
    parser = _Parser(prog="sgimc", description="Sparse group inductive matrix completion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic instance(s)")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sweep", choices=["rho", "feature"], default=None,
                   help="write the whole sweep, one subdirectory per instance")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--noise-convention", choices=["variance", "sd"], default="variance")
    p.add_argument("--no-truth", action="store_true", help="omit ground-truth files")

    p = sub.add_parser("fit", help="fit a model and write it with a report")
    _common(p)
    p.add_argument("--m", required=True, help="observed entries (MatrixMarket)")
    p.add_argument("--x", required=True, help="row features")
    p.add_argument("--y", required=True, help="column features")
    p.add_argument("--loss", choices=["squared", "logistic"], default="squared")
    p.add_argument("--remap-labels", action="store_true", help="map 0/1 labels to -1/+1")
    p.add_argument("--k", type=int)
    p.add_argument("--penalty", choices=["group", "frobenius", "l1"])
    p.add_argument("--lambda", dest="lam", type=float, help="lambda for both factors")
    p.add_argument("--lambda-u", type=float)
    p.add_argument("--lambda-v", type=float)
    p.add_argument("--combined", action="store_true", default=None,
                   help="add the low-rank residual term")
    p.add_argument("--k1", type=int)
    p.add_argument("--max-iter", type=int, help="outer sweeps")
    p.add_argument("--tol", type=float, help="outer relative-change tolerance")
    p.add_argument("--out", default="model.sgimc")
    p.add_argument("--report", default=None, help="report JSON (default: <out>.report.json)")

    p = sub.add_parser("predict", help="score index pairs with a saved model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True, help="'i j' lines, 0-based")
    p.add_argument("--x", help="row features (default: path stored in the model)")
    p.add_argument("--y", help="column features (default: path stored in the model)")
    p.add_argument("--transform", choices=["none", "proba", "sign"], default="none")
    p.add_argument("--no-residual", action="store_true")
    p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("eval", help="metrics from predictions and truth")
    _common(p)
    p.add_argument("--pred", required=True, help="'i j value' lines")
    p.add_argument("--truth", required=True, help="'i j value' lines or MatrixMarket")
    p.add_argument("--metric", action="append", choices=["rel_error", "accuracy", "f1"])
    p.add_argument("--out", default=None, help="JSON output (default: stdout)")

    p = sub.add_parser("experiment", help="run a sweep and write CSV + JSON")
    _common(p)
    p.add_argument("kind", choices=sorted(evaluation.EXPERIMENTS))
    p.add_argument("--out", required=True, help="CSV path; the sidecar gets .json")
    p.add_argument("--scale", type=float, default=0.25)
    p.add_argument("--methods", type=_csv_list(str), default=["sgimc", "imc"])
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--ranks", type=_csv_list(int))
    p.add_argument("--lambdas", type=_csv_list(float))
    p.add_argument("--only", type=_csv_list(int), help="indices into the sweep")
    p.add_argument("--metrics", type=_csv_list(str))
    p.add_argument("--target", choices=["signal", "noisy"], default="signal")
    p.add_argument("--no-timings", action="store_true",
                   help="write 0 seconds so reruns are byte-identical")
    return parser


def _load_config(path):
    if path is None:
        return {}, {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config", f"{path}: top level must be an object")
    grid = data.pop("grid", {})
    unknown = set(data) - _SOLVE_FIELDS
    unknown |= {f"grid.{k}" for k in set(grid) - _GRID_FIELDS}
    if unknown:
        raise CliError("config", f"{path}: unknown fields {sorted(unknown)}")
    return data, grid


def _solve_config(args, base):
    d = dict(base)
    if args.seed is not None:
        d["seed"] = args.seed
    for flag, key in (("k", "k"), ("k1", "k1"), ("max_iter", "outer_max_iter"),
                      ("tol", "outer_tol"), ("combined", "combined")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "penalty", None):
        d["penalty_u"] = d["penalty_v"] = args.penalty
    if getattr(args, "lam", None) is not None:
        d["lam_u"] = d["lam_v"] = args.lam
    if getattr(args, "lambda_u", None) is not None:
        d["lam_u"] = args.lambda_u
    if getattr(args, "lambda_v", None) is not None:
        d["lam_v"] = args.lambda_v
    try:
        return SolveConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_instance(directory, inst, truth):
    directory.mkdir(parents=True, exist_ok=True)
    io.write_mtx(directory / "m.mtx", inst.problem.M)
    io.write_dense(directory / "x.txt", inst.problem.X)
    io.write_dense(directory / "y.txt", inst.problem.Y)
    files = {"m": "m.mtx", "x": "x.txt", "y": "y.txt"}
    if truth:
        io.write_dense(directory / "signal.txt", inst.signal)
        io.write_dense(directory / "u_true.txt", inst.U_true)
        io.write_dense(directory / "v_true.txt", inst.V_true)
        files.update(signal="signal.txt", u_true="u_true.txt", v_true="v_true.txt")
    _write_json(directory / "manifest.json",
                {"spec": inst.spec.to_dict(), "files": files, "loss": "squared"})


def cmd_synth(args, cfg, grid):
    out = Path(args.out)
    seed = args.seed if args.seed is not None else 0
    overrides = {k: getattr(args, k) for k in ("n1", "n2", "d", "k", "rho")
                 if getattr(args, k) is not None}
    try:
        if args.sweep:
            if "d" in overrides and args.sweep == "feature":
                raise CliError("usage", "--d conflicts with --sweep feature", status=2)
            specs = datagen.sweep_specs(args.sweep, args.scale, seed=seed, **overrides)
        else:
            scaled = {k: max(1, int(round(v * args.scale))) for k, v in
                      dict(n1=800, n2=1600, d=100, k=25).items()}
            scaled.update(overrides)
            specs = [datagen.SynthSpec(seed=seed, **scaled)]
        specs = [s.with_convention(args.noise_convention) for s in specs]
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None
    if len(specs) == 1:
        _write_instance(out, datagen.generate(specs[0]), not args.no_truth)
    else:
        width = len(str(len(specs) - 1))
        for i, spec in enumerate(specs):
            _write_instance(out / f"{i:0{width}d}", datagen.generate(spec), not args.no_truth)
    print(f"wrote {len(specs)} instance(s) to {out}")
    return 0


def cmd_fit(args, cfg_base, grid):
    if args.threads:
        sparse.set_num_threads(args.threads)
    cfg = _solve_config(args, cfg_base)
    bundle = io.DatasetBundle(args.m, args.x, args.y, args.loss, args.remap_labels)
    prob = io.load_problem(bundle)
    f, report = fit(prob, cfg)
    extra = {"loss": prob.loss.value,
             "x_path": str(Path(args.x).resolve()), "y_path": str(Path(args.y).resolve())}
    io.save_model(args.out, f, config=cfg.to_dict(), extra=extra)
    report_path = args.report or f"{args.out}.report.json"
    _write_json(report_path, report.to_dict())
    print(f"{report.n_sweeps} sweeps, objective {report.objective[-1]:.6g}, "
          f"converged={report.converged}; model -> {args.out}")
    return 0


def cmd_predict(args, cfg, grid):
    f, meta = io.load_model(args.model)
    x_path = args.x or meta.get("x_path")
    y_path = args.y or meta.get("y_path")
    if not (x_path and y_path):
        raise CliError("usage", "model has no stored feature paths; pass --x and --y", 2)
    X, Y = io.read_features(x_path), io.read_features(y_path)
    pairs, _ = io.read_pairs(args.pairs)
    transform = None if args.transform == "none" else args.transform
    p = predict(f, X, Y, pairs, include_residual=not args.no_residual, transform=transform)
    if args.out:
        io.write_pairs(args.out, pairs, p)
    else:
        for (i, j), v in zip(pairs.tolist(), p.tolist()):
            sys.stdout.write(f"{i} {j} {io.FLOAT_FMT % v}\n")
    return 0


def _read_scored(path):
    if str(path).endswith(".mtx"):
        S = io.read_mtx(path)
        return np.column_stack([S.rows, S.cols]), S.values
    pairs, values = io.read_pairs(path)
    if values is None:
        raise io.FormatError(f"{path}: expected 'i j value' lines")
    return pairs, values


def cmd_eval(args, cfg, grid):
    pp, pv = _read_scored(args.pred)
    tp, tv = _read_scored(args.truth)
    lookup = {(i, j): n for n, (i, j) in enumerate(pp.tolist())}
    missing = [tuple(t) for t in tp.tolist() if tuple(t) not in lookup]
    if missing:
        raise CliError("format", f"{args.pred}: no prediction for {len(missing)} truth "
                                 f"pairs, e.g. {missing[0]}")
    pred = pv[[lookup[tuple(t)] for t in tp.tolist()]]
    funcs = {"rel_error": evaluation.metric_rel_error, "accuracy": evaluation.metric_accuracy,
             "f1": evaluation.metric_f1}
    result = {m: funcs[m](pred, tv) for m in (args.metric or ["rel_error"])}
    text = json.dumps(result, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_experiment(args, cfg_base, grid_base):
    g = dict(grid_base)
    if args.lambdas:
        g["lambdas"] = args.lambdas
    if args.ranks:
        g["ranks"] = args.ranks
    try:
        grid = evaluation.GridSpec(**g)
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None
    base = dict(cfg_base)
    for key, value in evaluation.EXPERIMENT_DEFAULTS.items():
        if isinstance(value, dict):
            base[key] = {**value, **base.get(key, {})}
        else:
            base.setdefault(key, value)
    cfg = _solve_config(args, base)
    seeds = args.seeds
    if seeds is None and args.seed is not None:
        seeds = [args.seed + s for s in grid.seeds]
    try:
        records = evaluation.run_experiment(
            args.kind, out=args.out, scale=args.scale, methods=args.methods, grid=grid,
            cfg=cfg, seeds=seeds, ranks=args.ranks, only=args.only, metrics=args.metrics,
            target=args.target, threads=args.threads or 1, timings=not args.no_timings)
    except (IndexError, ValueError) as exc:
        raise CliError("config", str(exc)) from None
    failed = [r for r in records if r.status != "ok"]
    print(f"{len(records)} rows -> {args.out}")
    if failed:
        raise CliError("experiment", f"{len(failed)} of {len(records)} rows failed "
                                     f"(first: {failed[0].status})")
    return 0


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "predict": cmd_predict, "eval": cmd_eval,
            "experiment": cmd_experiment}

_ERROR_CODES = ((io.FormatError, "format"), (DimensionError, "dimension"),
                (LabelError, "label"), (NumericalError, "numerical"),
                (ColdStartError, "cold-start"), (SGIMCError, "runtime"))


def _fail(code, detail, status):
    detail = " ".join(str(detail).split())
    print(f"error: {code}: {detail}", file=sys.stderr)
    return status


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg, grid = _load_config(args.config)
        return COMMANDS[args.command](args, cfg, grid)
    except CliError as exc:
        return _fail(exc.code, exc.detail, exc.status)
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        return _fail("io", f"{name}: {exc.strerror or exc}", 1)
    except SGIMCError as exc:
        code = next(c for cls, c in _ERROR_CODES if isinstance(exc, cls))
        return _fail(code, exc, 1)
    except (ValueError, IndexError) as exc:
        return _fail("input", exc, 1)


if __name__ == "__main__":
    sys.exit(main())

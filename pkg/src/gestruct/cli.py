"""Command-line interface.

Subcommands: ``simulate`` (write scenario replicates as CSVs plus a truth
JSON), ``fit`` (one penalized fit at fixed penalty levels), ``tune`` (BIC
grid search with a path CSV), ``screen`` (marginal prescreening), and the
``benchmark`` / ``stability`` harnesses.  Survival CSVs carry raw event
times; the log transform happens here on ingestion.  Outputs are written
atomically (temp file and rename); progress goes to standard error, data to
files only.  Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv as _csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .benchmark import BenchmarkPlan, run_benchmark, run_stability
from .data import read_dataset_csv, write_dataset_csv
from .baselines import marginal_screen
from .errors import DataError, NumericalError
from .pipeline import METHODS, analyze, format_fit_report, make_grid
from .simulation import parse_scenario_id, simulate_scenario
from .tuning import TuningGrid, write_path_csv

log = logging.getLogger("gestruct")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _atomic_csv(path, writer_fn):
    tmp = f"{path}.tmp"
    writer_fn(tmp)
    os.replace(tmp, path)


def _load_csv(path):
    """Read a dataset CSV; survival files (delta column) are detected from
    the header and their time column is log-transformed here."""
    with open(path, newline="") as fh:
        header = next(_csv.reader(fh), None)
    if not header:
        raise DataError(f"{path}: empty file")
    survival = len(header) > 1 and header[1].strip() == "delta"
    return read_dataset_csv(path, log_time=survival)


def _truth_json(truth):
    fe = truth.effects
    beta = {str(j): fe.beta[j] for j in np.flatnonzero(fe.beta)}
    eta = {f"{k},{j}": fe.eta[k, j]
           for k in range(fe.q) for j in np.flatnonzero(fe.eta[k])}
    body = {
        "alpha": fe.alpha.tolist(),
        "beta_nonzero": beta,
        "eta_nonzero": eta,
        "pattern": {
            "main": sorted(truth.pattern.main),
            "interactions": [sorted(s) for s in truth.pattern.interactions],
        },
        "indexing": "0-based columns",
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _echo_config(name, args):
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "config")}
    log.info("%s config: %s", name, json.dumps(resolved, default=str,
                                               sort_keys=True))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_simulate(args):
    spec = parse_scenario_id(args.scenario)
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    spec = type(spec)(
        correlation=spec.correlation, maf=spec.maf, outcome=spec.outcome,
        p=args.p, q=args.q, seed=args.seed, test_n=args.test_n, **overrides,
    )
    os.makedirs(args.out, exist_ok=True)
    for rep in range(args.replicates):
        seed = np.random.SeedSequence((args.seed, rep))
        sim = simulate_scenario(spec, seed=seed)
        suffix = "" if args.replicates == 1 else f"_r{rep:03d}"
        exp_time = spec.outcome == "aft"
        for tag, d in (("train", sim.train), ("test", sim.test)):
            path = os.path.join(args.out, f"{tag}{suffix}.csv")
            _atomic_csv(path, lambda tmp, _d=d: write_dataset_csv(
                _d, tmp, exp_time=exp_time))
            log.info("wrote %s (%d rows)", path, d.n)
        truth_path = os.path.join(args.out, f"truth{suffix}.json")
        _atomic_write_text(truth_path, _truth_json(sim.truth))
        log.info("wrote %s", truth_path)
    return 0


def _parse_fixed(args):
    if (args.lambda1 is None) != (args.lambda2 is None):
        raise DataError("provide both --lambda1 and --lambda2, or neither")
    if args.lambda1 is None:
        return None
    return (args.lambda1, args.lambda2)


def _cmd_fit(args):
    d = _load_csv(args.data)
    fixed = _parse_fixed(args)
    if fixed is None:
        raise DataError("fit needs --lambda1 and --lambda2; use tune to search")
    model = analyze(
        d, method=args.method, penalty_kind=args.penalty,
        fixed=fixed, alpha_cut=args.alpha_cut,
        pm=_custom_pm(args, d.p),
    )
    report = format_fit_report(model)
    _atomic_write_text(args.out, report)
    log.info("wrote %s (%d mains, %d interactions)", args.out,
             model.pattern.n_main, model.pattern.n_interactions)
    return 0


def _custom_pm(args, p):
    if getattr(args, "penalty_file", None):
        from .penalties import checked, load_penalty_triplets
        return checked(load_penalty_triplets(args.penalty_file, p=p))
    if getattr(args, "adjacency_file", None):
        from .penalties import build_laplacian_penalty
        import scipy.sparse as sp
        raw = np.loadtxt(args.adjacency_file, ndmin=2)
        if raw.shape[1] != 3:
            raise DataError("adjacency file must be (row, col, value) triplets")
        A = sp.csr_matrix((raw[:, 2], (raw[:, 0].astype(int),
                                       raw[:, 1].astype(int))), shape=(p, p))
        return build_laplacian_penalty(A)
    return None


def _grid_from_args(args, d):
    if args.lambda1_values or args.lambda2_values:
        if not (args.lambda1_values and args.lambda2_values):
            raise DataError("provide both --lambda1-values and --lambda2-values")
        l1 = tuple(sorted((float(v) for v in args.lambda1_values.split(",")),
                          reverse=True))
        l2 = tuple(float(v) for v in args.lambda2_values.split(","))
        return TuningGrid(l1, l2)
    return make_grid(d, n_lambda1=args.lambda1_count,
                     n_lambda2=args.lambda2_count,
                     lambda1_ratio=args.lambda1_ratio,
                     lambda2_range=(args.lambda2_min, args.lambda2_max))


def _cmd_tune(args):
    d = _load_csv(args.data)
    grid = _grid_from_args(args, d)
    model = analyze(
        d, method=args.method, penalty_kind=args.penalty, grid=grid,
        alpha_cut=args.alpha_cut, pm=_custom_pm(args, d.p), keep_trace=True,
    )
    report_path = f"{args.out_prefix}_report.txt"
    path_path = f"{args.out_prefix}_path.csv"
    _atomic_write_text(report_path, format_fit_report(model))
    _atomic_csv(path_path, lambda tmp: write_path_csv(model.trace, tmp))
    log.info("best (lambda1, lambda2) = (%.6g, %.6g); wrote %s and %s",
             model.chosen[0], model.chosen[1], report_path, path_path)
    return 0


def _cmd_screen(args):
    d = _load_csv(args.data)
    reduced, idx = marginal_screen(d, keep=args.keep, mode=args.mode)
    exp_time = d.is_survival
    _atomic_csv(args.out, lambda tmp: write_dataset_csv(
        reduced, tmp, exp_time=exp_time))
    map_path = args.map_out or f"{args.out}.map"
    _atomic_write_text(map_path, "\n".join(str(i) for i in idx) + "\n")
    log.info("kept %d of %d columns; wrote %s and %s",
             args.keep, d.p, args.out, map_path)
    return 0


def _cmd_benchmark(args):
    scenarios = []
    for sid in args.scenario:
        spec = parse_scenario_id(sid)
        overrides = {} if args.n is None else {"n": args.n}
        scenarios.append(type(spec)(
            correlation=spec.correlation, maf=spec.maf, outcome=spec.outcome,
            p=args.p, q=args.q, seed=args.seed, test_n=args.test_n,
            **overrides,
        ))
    methods = tuple(m.strip() for m in args.methods.split(","))
    plan = BenchmarkPlan(
        scenarios=tuple(scenarios), replicates=args.replicates,
        methods=methods, penalty_kind=args.penalty,
        master_seed=args.seed, workers=args.threads,
    )
    run_benchmark(plan, out_dir=args.out_dir)
    log.info("benchmark finished; outputs in %s", args.out_dir)
    return 0


def _cmd_stability(args):
    d = _load_csv(args.data)
    methods = tuple(m.strip() for m in args.methods.split(","))
    result = run_stability(
        d, methods=methods, penalty_kind=args.penalty,
        resamples=args.resamples, master_seed=args.seed,
        workers=args.threads,
    )
    _atomic_write_text(args.out, json.dumps(result, indent=2, sort_keys=True,
                                            default=str) + "\n")
    log.info("wrote %s", args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_penalty_flags(p):
    p.add_argument("--penalty", default="spline",
                   choices=["spline", "laplacian", "custom", "none"])
    p.add_argument("--penalty-file", help="custom J as 0-indexed (row, col, "
                                          "value) triplets")
    p.add_argument("--adjacency-file", help="precomputed adjacency triplets "
                                            "for the laplacian penalty")
    p.add_argument("--alpha-cut", type=float, default=0.05,
                   help="significance level for the correlation cutoff")


def build_parser() -> _Parser:
    parser = _Parser(prog="gestruct",
                     description="Structured gene-environment interaction "
                                 "analysis")
    parser.add_argument("--version", action="version",
                        version=f"gestruct {__version__}")
    parser.add_argument("--config", help="JSON file of defaults for the "
                                         "subcommand flags; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate scenario replicates")
    p.add_argument("--scenario", required=True,
                   help="e.g. ar03-m1-linear, band2-m2-aft, ld05-m1-linear")
    p.add_argument("--n", type=int, help="training rows (default per outcome)")
    p.add_argument("--p", type=int, default=5000)
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--test-n", type=int, default=100)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="one fit at fixed penalty levels")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="structured", choices=list(METHODS))
    _add_penalty_flags(p)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--out", default="fit_report.txt")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("tune", help="BIC grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="structured", choices=list(METHODS))
    _add_penalty_flags(p)
    p.add_argument("--lambda1-count", type=int, default=50)
    p.add_argument("--lambda2-count", type=int, default=10)
    p.add_argument("--lambda1-ratio", type=float, default=0.01)
    p.add_argument("--lambda2-min", type=float, default=1e-3)
    p.add_argument("--lambda2-max", type=float, default=1.0)
    p.add_argument("--lambda1-values", help="comma-separated explicit levels")
    p.add_argument("--lambda2-values", help="comma-separated explicit levels")
    p.add_argument("--out-prefix", default="tune")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("screen", help="marginal prescreening")
    p.add_argument("--data", required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--mode", default="individual",
                   choices=["individual", "region"])
    p.add_argument("--out", required=True)
    p.add_argument("--map-out", help="kept-column index file "
                                     "(default: <out>.map)")
    p.set_defaults(func=_cmd_screen)

    p = sub.add_parser("benchmark", help="scenario benchmark")
    p.add_argument("--scenario", action="append", required=True,
                   help="repeatable scenario id")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--penalty", default="spline",
                   choices=["spline", "laplacian", "none"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--test-n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("stability", help="resampling stability")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--penalty", default="spline",
                   choices=["spline", "laplacian", "none"])
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="stability.json")
    p.set_defaults(func=_cmd_stability)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            with open(args.config) as fh:
                defaults = json.load(fh)
            if not isinstance(defaults, dict):
                raise DataError("config file must hold a JSON object")
            parser.set_defaults(**{k.replace("-", "_"): v
                                   for k, v in defaults.items()})
            args = parser.parse_args(argv)  # explicit flags win over config
        _echo_config(args.command, args)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Experiment orchestration: scenario replicates and resampling stability.

A benchmark plan names scenarios, a replicate count, and a method subset.
Each replicate simulates a train/test pair from a seed derived from
(master seed, scenario index, replicate index), tunes and fits every method,
and scores selection, estimation, and prediction.  Replicates run in a
process pool; results are deterministic for a fixed plan and seed regardless
of scheduling, and per-replicate records persist as JSON lines so aggregation
can be re-run without re-fitting.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError
from .evaluation import c_statistic, ooi, pmse, rse, rsse, selection_metrics
from .pipeline import METHODS, analyze, build_penalty
from .simulation import ScenarioSpec, simulate_scenario
from .tuning import TuningGrid

__all__ = ["BenchmarkPlan", "ReplicateRecord", "run_benchmark",
           "aggregate_records", "format_table", "run_stability"]

_COUNT_KEYS = ("m_tp", "m_fp", "i_tp", "i_fp")
_ERROR_KEYS = ("rsse", "rse")


@dataclass(frozen=True)
class BenchmarkPlan:
    scenarios: tuple[ScenarioSpec, ...]
    replicates: int
    methods: tuple[str, ...] = METHODS
    penalty_kind: str = "spline"
    grid: TuningGrid | None = None   # data-driven default per replicate
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise DataError("need at least one replicate")
        if not self.methods:
            raise DataError("need at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise DataError(f"unknown method {m!r}")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass
class ReplicateRecord:
    scenario: str
    replicate: int
    failed: bool = False
    error: str = ""
    censoring: float | None = None
    methods: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({
            "scenario": self.scenario,
            "replicate": self.replicate,
            "failed": self.failed,
            "error": self.error,
            "censoring": self.censoring,
            "methods": self.methods,
        }, sort_keys=True)


def _score_method(model, sim, pm):
    truth = sim.truth
    counts = selection_metrics(model.pattern, truth.pattern)
    rec = {
        "m_tp": counts.m_tp,
        "m_fp": counts.m_fp,
        "i_tp": counts.i_tp,
        "i_fp": counts.i_fp,
        "rsse": rsse(model.effects, truth.effects),
        "rse": rse(model.effects, truth.effects, pm),
        "converged": bool(model.all_converged),
        "max_iterations": int(model.max_fit_iterations or model.iterations),
        "monotone": bool(model.traces_monotone),
        "hierarchy": bool(model.pattern.satisfies_hierarchy),
    }
    if model.chosen is not None:
        rec["lambda1"], rec["lambda2"] = model.chosen
    pred = model.predict(sim.test.Z, sim.test.X)
    if sim.spec.outcome == "linear":
        rec["pmse"] = pmse(pred, sim.test)
    else:
        rec["cstat"] = c_statistic(pred, sim.test)
    return rec


def _run_replicate(plan: BenchmarkPlan, scenario_idx: int, rep: int
                   ) -> ReplicateRecord:
    spec = plan.scenarios[scenario_idx]
    record = ReplicateRecord(scenario=spec.scenario_id, replicate=rep)
    seed = np.random.SeedSequence((plan.master_seed, scenario_idx, rep))
    try:
        sim = simulate_scenario(spec, seed=seed)
    except Exception as exc:  # simulation failure kills the replicate
        record.failed = True
        record.error = f"simulation: {exc}"
        return record
    if spec.outcome == "aft":
        record.censoring = float(1.0 - sim.train.delta.mean())
    pm = build_penalty(plan.penalty_kind, spec.p, X=sim.train.X)
    for method in plan.methods:
        try:
            model = analyze(sim.train, method=method,
                            penalty_kind=plan.penalty_kind, pm=pm,
                            grid=plan.grid)
            record.methods[method] = _score_method(model, sim, pm)
        except Exception as exc:
            record.methods[method] = {"failed": True, "error": str(exc)}
    return record


def run_benchmark(plan: BenchmarkPlan, out_dir=None) -> list[ReplicateRecord]:
    """Execute the plan; optionally persist plan.json, replicates.jsonl, and
    table.csv under ``out_dir``.  Returns per-replicate records in
    (scenario, replicate) order."""
    tasks = [(s, r) for s in range(len(plan.scenarios))
             for r in range(plan.replicates)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(_run_replicate, plan, s, r) for s, r in tasks]
            records = [f.result() for f in futures]
    else:
        records = [_run_replicate(plan, s, r) for s, r in tasks]
    records.sort(key=lambda rec: (rec.scenario, rec.replicate))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _atomic_write(os.path.join(out_dir, "plan.json"), _plan_json(plan))
        _atomic_write(
            os.path.join(out_dir, "replicates.jsonl"),
            "".join(rec.to_json() + "\n" for rec in records),
        )
        table = format_table(aggregate_records(records))
        _atomic_write(os.path.join(out_dir, "table.csv"), table)
    return records


def _plan_json(plan: BenchmarkPlan) -> str:
    body = {
        "scenarios": [asdict(s) for s in plan.scenarios],
        "replicates": plan.replicates,
        "methods": list(plan.methods),
        "penalty_kind": plan.penalty_kind,
        "grid": None if plan.grid is None else {
            "lambda1_values": list(plan.grid.lambda1_values),
            "lambda2_values": list(plan.grid.lambda2_values),
            "r": plan.grid.r,
        },
        "master_seed": plan.master_seed,
        "workers": plan.workers,
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def aggregate_records(records) -> dict:
    """Mean and standard deviation of every metric per scenario and method,
    with method-level failure counts.  Accepts ReplicateRecord objects or
    dicts parsed back from replicates.jsonl."""
    def as_dict(rec):
        if isinstance(rec, ReplicateRecord):
            return json.loads(rec.to_json())
        return rec

    grouped: dict = {}
    for rec in map(as_dict, records):
        scen = grouped.setdefault(rec["scenario"], {})
        if rec["failed"]:
            scen["_replicate_failures"] = scen.get("_replicate_failures", 0) + 1
            continue
        for method, vals in rec["methods"].items():
            slot = scen.setdefault(method, {"metrics": {}, "failures": 0, "n": 0})
            if vals.get("failed"):
                slot["failures"] += 1
                continue
            slot["n"] += 1
            for key, v in vals.items():
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    slot["metrics"].setdefault(key, []).append(float(v))
    out: dict = {}
    for scen, methods in grouped.items():
        out[scen] = {}
        for method, slot in methods.items():
            if method == "_replicate_failures":
                out[scen][method] = slot
                continue
            stats = {}
            for key, vals in slot["metrics"].items():
                arr = np.asarray(vals)
                stats[key] = (float(arr.mean()),
                              float(arr.std(ddof=1)) if arr.size > 1 else 0.0)
            out[scen][method] = {"stats": stats, "failures": slot["failures"],
                                 "n": slot["n"]}
    return out


def _fmt(mean_sd, decimals):
    mean, sd = mean_sd
    return f"{mean:.{decimals}f}({sd:.{decimals}f})"


def format_table(aggregate: dict) -> str:
    """CSV in the benchmark-table layout: one row per scenario and method
    with mean(sd) cells; counts to one decimal, errors to two."""
    lines = ["scenario,method,M:TP,M:FP,I:TP,I:FP,RSSE,RSE,PMSE/Cstat,failures"]
    for scen in sorted(aggregate):
        methods = aggregate[scen]
        for method in sorted(k for k in methods if not k.startswith("_")):
            slot = methods[method]
            stats = slot["stats"]
            cells = [scen, method]
            for key in _COUNT_KEYS:
                cells.append(_fmt(stats[key], 1) if key in stats else "")
            for key in _ERROR_KEYS:
                cells.append(_fmt(stats[key], 2) if key in stats else "")
            pred = stats.get("pmse", stats.get("cstat"))
            cells.append(_fmt(pred, 2) if pred is not None else "")
            cells.append(str(slot["failures"]))
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Resampling stability on a fixed dataset
# ---------------------------------------------------------------------------

def _stability_one(args):
    d, method, penalty_kind, grid, seed_tuple = args
    rng = np.random.default_rng(np.random.SeedSequence(seed_tuple))
    n_train = int(np.ceil(0.8 * d.n))
    rows = rng.choice(d.n, size=n_train, replace=False)
    mask = np.zeros(d.n, dtype=bool)
    mask[rows] = True
    train = Dataset(d.y[mask], d.Z[mask], d.X[mask],
                    delta=None if d.delta is None else d.delta[mask])
    hold = Dataset(d.y[~mask], d.Z[~mask], d.X[~mask],
                   delta=None if d.delta is None else d.delta[~mask])
    model = analyze(train, method=method, penalty_kind=penalty_kind, grid=grid)
    pred = model.predict(hold.Z, hold.X)
    if d.is_survival:
        return c_statistic(pred, hold)
    return pmse(pred, hold)


def run_stability(d: Dataset, methods=METHODS, penalty_kind: str = "spline",
                  grid: TuningGrid | None = None, resamples: int = 100,
                  master_seed: int = 0, workers: int = 1) -> dict:
    """Prediction and selection stability over resampled refits.

    For each method: tune on the full data once; then (a) over ``resamples``
    80/20 splits, tune-and-fit on the 80% part and score predictions on the
    holdout, and (b) refit 80% subsamples at the full-data penalty levels and
    compute per-effect selection frequencies, summarized as the mean over the
    effects selected on the full data.
    """
    out = {}
    for mi, method in enumerate(methods):
        full = analyze(d, method=method, penalty_kind=penalty_kind, grid=grid)

        args = [(d, method, penalty_kind, grid, (master_seed, mi, 0, b))
                for b in range(resamples)]
        scores = []
        failures = 0
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_stability_one, a) for a in args]
                for fut in futures:
                    try:
                        scores.append(fut.result())
                    except Exception:
                        failures += 1
        else:
            for a in args:
                try:
                    scores.append(_stability_one(a))
                except Exception:
                    failures += 1

        def refit(sub, _method=method, _chosen=full.chosen):
            model = analyze(sub, method=_method, penalty_kind=penalty_kind,
                            fixed=_chosen)
            return model.pattern

        if method == "marginal":
            def refit(sub, _method=method):  # noqa: F811 - no tuning to pin
                return analyze(sub, method=_method).pattern
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, mi, 1)))
        stability = ooi(d, refit, full.pattern, resamples, rng)
        out[method] = {
            "prediction_scores": scores,
            "mean_prediction": float(np.mean(scores)) if scores else float("nan"),
            "prediction_failures": failures,
            "mean_ooi": stability.mean_over_selected,
            "ooi_completed": stability.completed,
            "ooi_failed": stability.failed,
            "chosen": full.chosen,
            "full_pattern_size": (full.pattern.n_main,
                                  full.pattern.n_interactions),
        }
    return out

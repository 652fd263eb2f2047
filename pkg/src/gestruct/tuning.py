"""Penalty-level selection: BIC, warm-started grid search, path tracing.

The sparsity level lambda1 is searched on a descending log grid anchored at
the data-driven level that just zeroes every main effect; each fit warm
starts from the previous (larger) lambda1 solution at the same lambda2.  The
pair minimizing BIC wins, with ties broken toward the sparser, smoother cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import Dataset, FullEffects
from .errors import DataError, NumericalError
from .penalties import MCPParams, PenaltyMatrix
from .solver import (
    Design,
    SolverConfig,
    fit,
    make_design,
    residual_sum_of_squares,
)

__all__ = ["TuningGrid", "PathPoint", "default_grid", "bic", "lambda1_max",
           "grid_search", "write_path_csv"]


@dataclass(frozen=True)
class TuningGrid:
    """Candidate penalty levels; lambda1 descending for warm-start order."""

    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    r: float = 3.0

    def __post_init__(self):
        l1 = tuple(float(v) for v in self.lambda1_values)
        l2 = tuple(float(v) for v in self.lambda2_values)
        if not l1 or not l2:
            raise DataError("tuning grid must be nonempty")
        if any(v <= 0 for v in l1):
            raise DataError("lambda1 values must be positive")
        if any(v < 0 for v in l2):
            raise DataError("lambda2 values must be nonnegative")
        if list(l1) != sorted(l1, reverse=True):
            raise DataError("lambda1 values must be strictly descending")
        object.__setattr__(self, "lambda1_values", l1)
        object.__setattr__(self, "lambda2_values", l2)


@dataclass(frozen=True)
class PathPoint:
    """One grid cell of the tuning trace."""

    lambda1: float
    lambda2: float
    n_main: int
    n_interactions: int
    bic: float
    iterations: int
    converged: bool
    failed: bool = False
    monotone: bool = True
    effects: FullEffects | None = field(default=None, repr=False)


def bic(fit_result, d: Dataset) -> float:
    """n log(RSS/n) + log(n) * df with df = q + #nonzero mains + #nonzero
    interactions; RSS is the unpenalized residual sum of squares.

    Works for any result exposing ``effects`` and ``pattern``.
    """
    n = d.n
    rss = residual_sum_of_squares(d, fit_result.effects)
    if rss <= 1e-12 * max(float(d.y @ d.y), 1e-300):
        raise NumericalError(
            "numerically zero residual sum of squares; the penalty level is "
            "too small for an information criterion to be meaningful"
        )
    df = d.q + fit_result.pattern.n_main + fit_result.pattern.n_interactions
    return float(n * np.log(rss / n) + np.log(n) * df)


def lambda1_max(d: Dataset, pm: PenaltyMatrix | None = None) -> float:
    """Smallest sparsity level that keeps the first sweep from the null
    model all zero: the largest absolute per-column least-squares gradient
    of the environment-only residual."""
    ztz = d.Z.T @ d.Z
    alpha = scipy.linalg.solve(ztz, d.Z.T @ d.y, assume_a="pos")
    res = d.y - d.Z @ alpha
    grad = np.abs(d.X.T @ res) / d.n
    return float(grad.max())


def default_grid(d: Dataset, n_lambda1: int = 50, n_lambda2: int = 10,
                 lambda1_ratio: float = 0.05,
                 lambda2_range: tuple[float, float] = (0.05, 0.2),
                 r: float = 3.0) -> TuningGrid:
    """Data-driven default: n_lambda1 log-spaced sparsity levels from the
    all-zero threshold down to ratio * threshold, and log-spaced structure
    levels over ``lambda2_range``.

    The sparsity floor follows the usual n < p convention for concave
    penalties.  The structure range brackets the n^(-1/2) scale the theory
    prescribes for lambda2 (0.05 to 0.2 covers roughly 0.8 to 3 times that
    at the benchmark sample sizes); its floor also keeps the closed-form
    coordinate update strictly convex for genotype-scale columns coupled
    through the second-difference matrix, below which the criterion surface
    develops spurious dense optima.
    """
    top = lambda1_max(d)
    if top <= 0:
        top = 1.0  # degenerate data; any positive level yields the null fit
    l1 = np.geomspace(top, lambda1_ratio * top, n_lambda1)
    l2 = np.geomspace(lambda2_range[0], lambda2_range[1], n_lambda2)
    return TuningGrid(tuple(l1), tuple(l2), r=r)


def _solver_fitter(d, pm, cfg, prev, design):
    init = None if prev is None else prev.coefficients
    return fit(d, pm, cfg, init=init, design=design)


def grid_search(d: Dataset, pm: PenaltyMatrix, grid: TuningGrid,
                cfg_template: SolverConfig | None = None,
                keep_effects: bool = False,
                design: Design | None = None,
                fitter=None,
                ):
    """Fit every grid cell and return (best result, (lambda1, lambda2), trace).

    Within each lambda2 chain, fits warm start from the previous (larger)
    lambda1 solution.  Failed cells are recorded in the trace and skipped.
    Ties within 1e-12 of BIC go to the larger lambda1, then larger lambda2.
    ``fitter(d, pm, cfg, prev_result, design)`` defaults to the hierarchy
    solver; the structure-only baseline plugs in its own.
    """
    if design is None:
        design = make_design(d, pm)
    if fitter is None:
        fitter = _solver_fitter
    base = cfg_template or SolverConfig(mcp=MCPParams(lambda1=1.0))
    trace: list[PathPoint] = []
    best = None  # (bic, lambda1, lambda2, result)
    for lam2 in grid.lambda2_values:
        prev = None
        for lam1 in grid.lambda1_values:
            cfg = SolverConfig(
                mcp=MCPParams(lambda1=lam1, lambda2=lam2, r=grid.r),
                max_outer_iters=base.max_outer_iters,
                rel_tol=base.rel_tol,
                enforce_hierarchy=base.enforce_hierarchy,
                fit_interactions=base.fit_interactions,
            )
            try:
                res = fitter(d, pm, cfg, prev, design)
                score = bic(res, d)
            except (NumericalError, DataError):
                trace.append(PathPoint(lam1, lam2, 0, 0, float("nan"),
                                       0, False, failed=True))
                prev = None
                continue
            prev = res
            trace.append(PathPoint(
                lam1, lam2,
                res.pattern.n_main, res.pattern.n_interactions,
                score, res.iterations, res.converged,
                monotone=res.trace_nonincreasing,
                effects=res.effects if keep_effects else None,
            ))
            if best is None:
                best = (score, lam1, lam2, res)
            else:
                b_score, b_l1, b_l2, _ = best
                if score < b_score - 1e-12:
                    best = (score, lam1, lam2, res)
                elif abs(score - b_score) <= 1e-12 and (lam1, lam2) > (b_l1, b_l2):
                    best = (score, lam1, lam2, res)
    if best is None:
        raise NumericalError("every grid cell failed")
    _, l1, l2, res = best
    return res, (l1, l2), trace


def write_path_csv(trace: list[PathPoint], path) -> None:
    """Export the tuning trace, one grid cell per row, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda1", "lambda2", "n_main", "n_interactions",
                         "bic", "iterations", "converged", "failed"])
        for pt in trace:
            writer.writerow([
                f"{pt.lambda1:.10g}", f"{pt.lambda2:.10g}",
                pt.n_main, pt.n_interactions,
                "nan" if np.isnan(pt.bic) else f"{pt.bic:.10g}",
                pt.iterations, int(pt.converged), int(pt.failed),
            ])

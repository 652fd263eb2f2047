"""Selection, estimation, prediction, and stability metrics.

Selection counts compare sparsity patterns against a ground truth; estimation
errors compare full effect vectors in original units (plain Euclidean, and a
structure-weighted quadratic form that ignores the environment block).
Prediction is mean squared error for linear outcomes and an inverse
probability of censoring weighted concordance for censored outcomes.
Stability is the per-effect selection frequency across subsample refits at
fixed penalty levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FullEffects, SparsityPattern
from .errors import DataError
from .penalties import PenaltyMatrix

__all__ = [
    "SelectionCounts",
    "selection_metrics",
    "rsse",
    "rse",
    "pmse",
    "c_statistic",
    "OOIResult",
    "ooi",
]


@dataclass(frozen=True)
class SelectionCounts:
    m_tp: int
    m_fp: int
    i_tp: int
    i_fp: int


def selection_metrics(est: SparsityPattern, truth: SparsityPattern) -> SelectionCounts:
    """True/false positive counts for main effects and for interactions,
    the latter compared as (environment, genetic) index pairs."""
    if len(est.interactions) != len(truth.interactions):
        raise DataError("patterns have different numbers of environment columns")
    m_tp = len(est.main & truth.main)
    m_fp = len(est.main - truth.main)
    est_pairs = est.interaction_pairs()
    true_pairs = truth.interaction_pairs()
    i_tp = len(est_pairs & true_pairs)
    i_fp = len(est_pairs - true_pairs)
    return SelectionCounts(m_tp, m_fp, i_tp, i_fp)


def rsse(est: FullEffects, truth: FullEffects) -> float:
    """Euclidean norm of the full effect error (alpha, beta, all eta rows)."""
    if est.eta.shape != truth.eta.shape:
        raise DataError("effect shapes differ")
    return float(np.linalg.norm(est.theta() - truth.theta()))


def rse(est: FullEffects, truth: FullEffects, pm: PenaltyMatrix) -> float:
    """Structure-weighted error sqrt(e_beta' J e_beta + sum_k e_k' J e_k);
    the environment block contributes nothing."""
    if est.eta.shape != truth.eta.shape:
        raise DataError("effect shapes differ")
    if pm.p != est.p:
        raise DataError("structure matrix does not match effects")
    J = pm.J
    e_beta = est.beta - truth.beta
    total = float(e_beta @ (J @ e_beta))
    for k in range(est.q):
        e = est.eta[k] - truth.eta[k]
        total += float(e @ (J @ e))
    return float(np.sqrt(max(total, 0.0)))


def pmse(predictions, test: Dataset) -> float:
    """Mean squared prediction error on an independent linear-outcome set."""
    if test.is_survival:
        raise DataError("pmse applies to linear outcomes")
    pred = np.asarray(predictions, dtype=np.float64)
    if pred.shape != test.y.shape:
        raise DataError("prediction length does not match the test set")
    return float(np.mean((test.y - pred) ** 2))


def _censoring_survival_before(y, delta):
    """Left limit of the Kaplan-Meier censoring survival curve at each y_i."""
    n = y.size
    order = np.lexsort((-delta, y))  # events before censorings at ties
    g_before = np.empty(n)
    g = 1.0
    at_risk = n
    last_t = -np.inf
    g_at_last = 1.0
    for idx in order:
        t = y[idx]
        if t > last_t:
            g_at_last = g
            last_t = t
        g_before[idx] = g_at_last
        if delta[idx] == 0:  # a censoring event for the censoring curve
            g *= 1.0 - 1.0 / at_risk
        at_risk -= 1
    return g_before


def c_statistic(predictions, test: Dataset) -> float:
    """Censoring-weighted concordance in [0, 1].

    Usable pairs are (i, j) with i an observed event strictly before j's
    observed time; a pair counts as concordant when the earlier event has
    the lower predicted log time (ties get half credit), weighted by the
    inverse squared censoring survival just before the event.  A constant
    predictor scores 0.5; the value only depends on prediction ranks.
    """
    if not test.is_survival:
        raise DataError("c_statistic needs a survival test set")
    if test.delta.sum() == 0:
        raise DataError("no events in the test set")
    pred = np.asarray(predictions, dtype=np.float64)
    if pred.shape != test.y.shape:
        raise DataError("prediction length does not match the test set")
    y, delta = test.y, test.delta
    g_before = _censoring_survival_before(y, delta)
    num = 0.0
    den = 0.0
    for i in np.flatnonzero(delta == 1):
        gi = g_before[i]
        if gi <= 0:
            continue
        w = 1.0 / (gi * gi)
        later = y > y[i]
        if not np.any(later):
            continue
        credit = np.where(
            pred[later] > pred[i], 1.0,
            np.where(pred[later] == pred[i], 0.5, 0.0),
        )
        num += w * credit.sum()
        den += w * np.count_nonzero(later)
    if den == 0:
        return 0.5  # no usable pairs: convention
    return float(num / den)


@dataclass(frozen=True)
class OOIResult:
    """Observed occurrence indices: per-effect selection frequencies over
    subsample refits, plus their mean over the full-data selections."""

    main_frequency: np.ndarray           # (p,)
    interaction_frequency: np.ndarray    # (q, p)
    mean_over_selected: float
    completed: int
    failed: int


def ooi(d: Dataset, refit, full_pattern: SparsityPattern, resamples: int,
        rng, fraction: float = 0.8) -> OOIResult:
    """Selection stability over ``resamples`` subsamples of ceil(fraction*n)
    rows without replacement.

    ``refit`` maps a row-subset Dataset to a SparsityPattern at fixed penalty
    levels.  Failed resamples are recorded and excluded from the denominator.
    The summary is the mean frequency over the effects selected on the full
    data (0.0 when nothing was selected there).
    """
    if resamples < 1:
        raise DataError("need at least one resample")
    n_sub = int(np.ceil(fraction * d.n))
    main_counts = np.zeros(d.p)
    inter_counts = np.zeros((d.q, d.p))
    completed = 0
    failed = 0
    for _ in range(resamples):
        rows = rng.choice(d.n, size=n_sub, replace=False)
        sub = Dataset(
            d.y[rows], d.Z[rows], d.X[rows],
            delta=None if d.delta is None else d.delta[rows],
            column_meta=d.column_meta,
            interactions=None if d.interactions is None
            else d.interactions[:, rows, :],
        )
        try:
            pattern = refit(sub)
        except Exception:
            failed += 1
            continue
        completed += 1
        for j in pattern.main:
            main_counts[j] += 1
        for k, s in enumerate(pattern.interactions):
            for j in s:
                inter_counts[k, j] += 1
    if completed == 0:
        raise DataError("every resample failed")
    main_freq = main_counts / completed
    inter_freq = inter_counts / completed
    selected = [main_freq[j] for j in full_pattern.main]
    selected += [inter_freq[k, j]
                 for k, s in enumerate(full_pattern.interactions) for j in s]
    mean_sel = float(np.mean(selected)) if selected else 0.0
    return OOIResult(main_freq, inter_freq, mean_sel, completed, failed)

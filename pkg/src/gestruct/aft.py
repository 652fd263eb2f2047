"""Censored outcomes via Kaplan-Meier-weighted least squares.

A log-linear model for survival time is fit by turning the censored dataset
into an ordinary least-squares problem: rows are sorted by observed log time,
each gets the Kaplan-Meier jump as its weight, all variables are centered at
their weighted means, and every row is scaled by the square root of its
weight.  Interaction regressors are centered as their own quantities, so the
transformed dataset carries explicit interaction blocks; after the transform
the unchanged solver applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FullEffects
from .errors import DataError

__all__ = ["KMWeights", "AftTransform", "km_weights", "prepare_aft",
           "transform_weighted"]


@dataclass(frozen=True)
class KMWeights:
    """Nonnegative weights aligned to y-ascending order; they sum to at most
    one and vanish on censored rows."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)

    @property
    def total(self):
        return float(self.w.sum())


def km_weights(delta) -> KMWeights:
    """Kaplan-Meier jump weights for rows already sorted by observed time
    ascending (ties broken events first).

    w_1 = d_1/n and w_i = d_i/(n-i+1) * prod_{l<i} ((n-l)/(n-l+1))^{d_l},
    which equals the jump of the Kaplan-Meier survival estimator at row i's
    time when row i is an event, and zero otherwise.
    """
    d = np.asarray(delta, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise DataError("delta must be a nonempty 1-d 0/1 sequence")
    if not np.all((d == 0) | (d == 1)):
        raise DataError("delta entries must be 0 or 1")
    n = d.size
    i = np.arange(1, n + 1)
    # survival factor just before each row: prod_{l<i} ((n-l)/(n-l+1))^{d_l}
    frac = (n - i) / (n - i + 1.0)
    log_terms = d * np.log(frac, where=frac > 0, out=np.zeros(n))
    # the last factor (l = n) is only ever used "before" no row
    surv_before = np.exp(np.concatenate([[0.0], np.cumsum(log_terms[:-1])]))
    w = d / (n - i + 1.0) * surv_before
    return KMWeights(w)


@dataclass(frozen=True)
class AftTransform:
    """Sort order, weights, and weighted means of the least-squares form;
    enough to express fitted coefficients against the original data."""

    order: np.ndarray          # original-row index per transformed row
    weights: np.ndarray        # KM weights, transformed-row order
    y_mean: float
    z_mean: np.ndarray
    x_mean: np.ndarray
    w_mean: np.ndarray         # (q, p) weighted means of interaction columns

    def intercept(self, fe: FullEffects) -> float:
        """Intercept of the raw-unit model y ~ b0 + Z a + X b + interactions
        for slope effects ``fe`` fit on the transformed (centered) data."""
        return (
            self.y_mean
            - float(self.z_mean @ fe.alpha)
            - float(self.x_mean @ fe.beta)
            - float(np.sum(self.w_mean * fe.eta))
        )


def transform_weighted(d: Dataset, w: np.ndarray) -> tuple[Dataset, AftTransform]:
    """Weighted-centering transform for rows already sorted by y ascending.

    Every variable (response, environment, genetic, and each interaction
    column) is centered at its weighted mean and the whole row is scaled by
    sqrt(w_i).  Interactions are centered as their own quantities, not as
    products of centered factors, so the result carries explicit blocks.
    """
    w = np.asarray(w, dtype=np.float64)
    total = float(w.sum())
    if total <= 0:
        raise DataError("weights sum to zero; no events to fit")
    wn = w / total
    sw = np.sqrt(w)

    y_mean = float(wn @ d.y)
    z_mean = wn @ d.Z
    x_mean = wn @ d.X
    y_t = sw * (d.y - y_mean)
    Z_t = sw[:, None] * (d.Z - z_mean)
    X_t = sw[:, None] * (d.X - x_mean)
    W_t = np.empty((d.q, d.n, d.p))
    w_mean = np.empty((d.q, d.p))
    for k in range(d.q):
        Wk = d.interaction_matrix(k)
        w_mean[k] = wn @ Wk
        W_t[k] = sw[:, None] * (Wk - w_mean[k])
    out = Dataset(y_t, Z_t, X_t, column_meta=d.column_meta, interactions=W_t)
    rec = AftTransform(
        order=np.arange(d.n), weights=w,
        y_mean=y_mean, z_mean=z_mean, x_mean=x_mean, w_mean=w_mean,
    )
    return out, rec


def prepare_aft(d: Dataset) -> tuple[Dataset, AftTransform]:
    """Turn a censored-survival dataset into its least-squares form.

    Rows are sorted by observed log time ascending with events before
    censorings at ties, Kaplan-Meier weights computed, and the weighted
    centering transform applied.  The result feeds the solver unchanged.
    """
    if not d.is_survival:
        raise DataError("prepare_aft needs a survival dataset (delta present)")
    if d.delta.sum() == 0:
        raise DataError("no events in the data; nothing to fit")
    order = np.lexsort((1 - d.delta, d.y))  # time ascending, events first
    sorted_d = Dataset(
        d.y[order], d.Z[order], d.X[order],
        delta=d.delta[order], column_meta=d.column_meta,
        interactions=None if d.interactions is None
        else d.interactions[:, order, :],
    )
    w = km_weights(sorted_d.delta).w
    plain = Dataset(sorted_d.y, sorted_d.Z, sorted_d.X,
                    column_meta=sorted_d.column_meta,
                    interactions=sorted_d.interactions)
    out, rec = transform_weighted(plain, w)
    rec = AftTransform(order=order, weights=w, y_mean=rec.y_mean,
                       z_mean=rec.z_mean, x_mean=rec.x_mean, w_mean=rec.w_mean)
    return out, rec

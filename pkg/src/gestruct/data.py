"""Core containers: datasets, coefficient sets, standardization, CSV ingestion.

A model couples a response with environmental measurements Z (n x q) and
genetic measurements X (n x p).  Interaction regressors are the column-wise
products Z[:, k] * X[:, j]; they are derived on demand and never materialized
as an n x (p*q) matrix.  A dataset may instead carry explicit interaction
matrices (one n x p matrix per environment column), which is what the
censored-outcome transform produces, where interactions are centered as their
own quantities and stop being exact products.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "Dataset",
    "CoefficientSet",
    "FullEffects",
    "SparsityPattern",
    "Standardization",
    "derive_full_effects",
    "interaction_column",
    "standardize",
    "rescale_rows",
    "linear_predictor",
    "read_dataset_csv",
    "write_dataset_csv",
]


def _as_float_array(a, name, ndim):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable regression dataset.

    y holds the response (log event time for censored outcomes); delta is the
    0/1 event indicator and is present exactly when the outcome is survival.
    `interactions`, when given, is a (q, n, p) array of explicit interaction
    regressors; otherwise interactions are the products Z[:, k] * X[:, j].
    Instances are safe to share across concurrent fits.
    """

    y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    delta: np.ndarray | None = None
    column_meta: tuple[str, ...] | None = None
    interactions: np.ndarray | None = None

    def __post_init__(self):
        y = _as_float_array(self.y, "y", 1)
        Z = _as_float_array(self.Z, "Z", 2)
        X = _as_float_array(self.X, "X", 2)
        n = y.shape[0]
        if n < 1 or Z.shape[1] < 1 or X.shape[1] < 1:
            raise DataError("need n >= 1, q >= 1, p >= 1")
        if Z.shape[0] != n or X.shape[0] != n:
            raise DataError(
                f"row mismatch: y has {n}, Z has {Z.shape[0]}, X has {X.shape[0]}"
            )
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "Z", _freeze(Z))
        object.__setattr__(self, "X", _freeze(X))
        if self.delta is not None:
            delta = _as_float_array(self.delta, "delta", 1)
            if delta.shape[0] != n:
                raise DataError("delta length does not match y")
            if not np.all((delta == 0.0) | (delta == 1.0)):
                raise DataError("delta entries must be 0 or 1")
            object.__setattr__(self, "delta", _freeze(delta))
        if self.interactions is not None:
            W = _as_float_array(self.interactions, "interactions", 3)
            if W.shape != (Z.shape[1], n, X.shape[1]):
                raise DataError(
                    f"interactions must have shape (q, n, p) = "
                    f"{(Z.shape[1], n, X.shape[1])}, got {W.shape}"
                )
            object.__setattr__(self, "interactions", _freeze(W))
        if self.column_meta is not None:
            meta = tuple(self.column_meta)
            if len(meta) != X.shape[1]:
                raise DataError("column_meta length does not match p")
            object.__setattr__(self, "column_meta", meta)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def q(self):
        return self.Z.shape[1]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def is_survival(self):
        return self.delta is not None

    def interaction_matrix(self, k):
        """The n x p interaction regressor block for environment column k."""
        if not 0 <= k < self.q:
            raise IndexError(f"environment index {k} out of range [0, {self.q})")
        if self.interactions is not None:
            return self.interactions[k]
        return self.Z[:, k:k + 1] * self.X


def interaction_column(d: Dataset, k: int, j: int) -> np.ndarray:
    """Interaction regressor for environment column k and genetic column j."""
    if not 0 <= k < d.q:
        raise IndexError(f"environment index {k} out of range [0, {d.q})")
    if not 0 <= j < d.p:
        raise IndexError(f"genetic index {j} out of range [0, {d.p})")
    if d.interactions is not None:
        return d.interactions[k][:, j].copy()
    return d.Z[:, k] * d.X[:, j]


@dataclass(frozen=True)
class CoefficientSet:
    """Decomposed coefficients: alpha (q,), beta (p,), gamma (q, p).

    An interaction contributes beta[j] * gamma[k, j]; after a fit, gamma may
    be nonzero only where beta is (the solver enforces that on its output).
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        alpha = _as_float_array(self.alpha, "alpha", 1)
        beta = _as_float_array(self.beta, "beta", 1)
        gamma = _as_float_array(self.gamma, "gamma", 2)
        if gamma.shape != (alpha.shape[0], beta.shape[0]):
            raise DataError(
                f"gamma must have shape (q, p) = {(alpha.shape[0], beta.shape[0])},"
                f" got {gamma.shape}"
            )
        object.__setattr__(self, "alpha", _freeze(alpha))
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "gamma", _freeze(gamma))

    @classmethod
    def zeros(cls, q, p):
        return cls(np.zeros(q), np.zeros(p), np.zeros((q, p)))

    def copy_arrays(self):
        return self.alpha.copy(), self.beta.copy(), self.gamma.copy()


@dataclass(frozen=True)
class FullEffects:
    """Composed effects: alpha (q,), beta (p,), eta (q, p) with eta = beta*gamma."""

    alpha: np.ndarray
    beta: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        alpha = _as_float_array(self.alpha, "alpha", 1)
        beta = _as_float_array(self.beta, "beta", 1)
        eta = _as_float_array(self.eta, "eta", 2)
        if eta.shape != (alpha.shape[0], beta.shape[0]):
            raise DataError("eta must have shape (q, p)")
        object.__setattr__(self, "alpha", _freeze(alpha))
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "eta", _freeze(eta))

    @property
    def q(self):
        return self.alpha.shape[0]

    @property
    def p(self):
        return self.beta.shape[0]

    def theta(self):
        """Concatenation (alpha, beta, eta row 0, ..., eta row q-1)."""
        return np.concatenate([self.alpha, self.beta, self.eta.ravel()])

    @classmethod
    def zeros(cls, q, p):
        return cls(np.zeros(q), np.zeros(p), np.zeros((q, p)))


def derive_full_effects(c: CoefficientSet) -> FullEffects:
    """Compose interactions: eta[k, j] = beta[j] * gamma[k, j] exactly."""
    return FullEffects(c.alpha.copy(), c.beta.copy(), c.beta[None, :] * c.gamma)


@dataclass(frozen=True)
class SparsityPattern:
    """Nonzero index sets: main effects and one interaction set per E column."""

    main: frozenset[int]
    interactions: tuple[frozenset[int], ...]

    @classmethod
    def from_effects(cls, fe: FullEffects) -> "SparsityPattern":
        main = frozenset(np.flatnonzero(fe.beta != 0.0).tolist())
        inter = tuple(
            frozenset(np.flatnonzero(fe.eta[k] != 0.0).tolist()) for k in range(fe.q)
        )
        return cls(main, inter)

    @property
    def satisfies_hierarchy(self):
        return all(s <= self.main for s in self.interactions)

    @property
    def n_main(self):
        return len(self.main)

    @property
    def n_interactions(self):
        return sum(len(s) for s in self.interactions)

    def interaction_pairs(self):
        return {(k, j) for k, s in enumerate(self.interactions) for j in s}


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Standardization:
    """Record of the linear-model standardization, for exact back-transform.

    Genetic columns are centered only: the interaction multiplier for gene j
    sees a gradient proportional to the fitted main effect, so shrinking the
    genetic scale (and with it the fitted main effects) suppresses
    interaction selection relative to main-effect selection.  Keeping the
    native genetic scale preserves that balance.  Continuous environment
    columns are centered and scaled to unit population variance; binary
    environment columns and the response are centered only.  Zero-variance
    columns are flagged and left unscaled (the solver forces their
    coefficients to zero).
    """

    y_mean: float
    z_mean: np.ndarray
    z_scale: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    zero_variance_z: tuple[int, ...] = field(default=())
    zero_variance_x: tuple[int, ...] = field(default=())

    def back_transform(self, fe: FullEffects) -> tuple[float, FullEffects]:
        """Map effects fit on standardized data to original units.

        Returns (intercept, effects) such that
        intercept + Z a + X b + sum_kj Z_k X_j e_kj reproduces the
        standardized-model predictions on raw data.
        """
        sz, sx = self.z_scale, self.x_scale
        mz, mx = self.z_mean, self.x_mean
        eta_raw = fe.eta / (sz[:, None] * sx[None, :])
        alpha_raw = fe.alpha / sz - eta_raw @ mx
        beta_raw = fe.beta / sx - mz @ eta_raw
        intercept = (
            self.y_mean
            - float(np.dot(fe.alpha / sz, mz))
            - float(np.dot(fe.beta / sx, mx))
            + float(mz @ eta_raw @ mx)
        )
        return intercept, FullEffects(alpha_raw, beta_raw, eta_raw)


def standardize(d: Dataset, policy: str = "linear") -> tuple[Dataset, Standardization]:
    """Center/scale a linear-outcome dataset; returns the transformed data
    and the scaling record needed to express coefficients in original units.
    """
    if policy != "linear":
        raise DataError(f"unknown standardization policy {policy!r}")
    if d.is_survival:
        raise DataError("standardize applies to linear outcomes; use the "
                        "censored-outcome transform for survival data")
    if d.interactions is not None:
        raise DataError("standardize expects product-form interactions")

    x_mean = d.X.mean(axis=0)
    x_scale = np.ones(d.p)  # native genetic scale; see Standardization
    zx = np.flatnonzero(d.X.var(axis=0) <= 0.0)
    X_std = d.X - x_mean

    z_mean = d.Z.mean(axis=0)
    z_scale = np.ones(d.q)
    zz = []
    for k in range(d.q):
        col = d.Z[:, k]
        uniq = np.unique(col)
        if uniq.size <= 2:
            continue  # binary (or constant): center only
        s = col.std()
        if s <= 0.0:
            zz.append(k)
        else:
            z_scale[k] = s
    # constant columns carry scale 1 and get flagged
    for k in range(d.q):
        if np.unique(d.Z[:, k]).size == 1:
            zz.append(k)
    Z_std = (d.Z - z_mean) / z_scale

    y_mean = float(d.y.mean())
    out = Dataset(d.y - y_mean, Z_std, X_std, column_meta=d.column_meta)
    rec = Standardization(
        y_mean, z_mean, z_scale, x_mean, x_scale,
        zero_variance_z=tuple(sorted(set(zz))),
        zero_variance_x=tuple(zx.tolist()),
    )
    return out, rec


def rescale_rows(d: Dataset, factor: float) -> Dataset:
    """Multiply the response and every regressor by one common factor.

    Fitted slopes are invariant under this, so no back-transform is needed;
    it only moves the least-squares curvature onto the scale the penalty
    grids are calibrated for (used after the censored-outcome transform,
    whose rows carry a 1/sqrt(n) factor).
    """
    if factor <= 0:
        raise DataError("row rescale factor must be positive")
    W = None
    if d.interactions is not None:
        W = d.interactions * factor
    elif factor != 1.0:
        W = np.stack([d.interaction_matrix(k) for k in range(d.q)]) * factor
    return Dataset(d.y * factor, d.Z * factor, d.X * factor,
                   delta=d.delta, column_meta=d.column_meta, interactions=W)


def linear_predictor(intercept: float, fe: FullEffects, Z, X) -> np.ndarray:
    """Evaluate intercept + Z a + X b + sum_k Z_k * (X @ eta_k) on raw data."""
    Z = np.asarray(Z, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    pred = intercept + Z @ fe.alpha + X @ fe.beta
    for k in range(fe.q):
        pred += Z[:, k] * (X @ fe.eta[k])
    return pred


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _expected_header(q, p, with_delta):
    head = ["y"] + (["delta"] if with_delta else [])
    head += [f"z{k}" for k in range(1, q + 1)]
    head += [f"x{j}" for j in range(1, p + 1)]
    return head


def read_dataset_csv(path, log_time: bool = False) -> Dataset:
    """Read a dataset CSV with header ``y[,delta],z1..zq,x1..xp``.

    Missing values are an error.  With ``log_time`` the y column is
    log-transformed on ingestion (survival files carry raw times).
    """
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if header[0] != "y":
        raise DataError(f"{path}: first column must be 'y', got {header[0]!r}")
    with_delta = len(header) > 1 and header[1] == "delta"
    q = sum(1 for h in header if h.startswith("z"))
    p = sum(1 for h in header if h.startswith("x"))
    if q < 1 or p < 1:
        raise DataError(f"{path}: need at least one z and one x column")
    if header != _expected_header(q, p, with_delta):
        raise DataError(
            f"{path}: header must be y[,delta],z1..z{q},x1..x{p} in order"
        )
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: unparseable numeric data ({exc})") from exc
    if raw.shape[1] != len(header):
        raise DataError(f"{path}: row width does not match header")
    if not np.all(np.isfinite(raw)):
        raise DataError(f"{path}: missing or non-finite values are not supported")
    col = 0
    y = raw[:, col]
    col += 1
    delta = None
    if with_delta:
        delta = raw[:, col]
        col += 1
    Z = raw[:, col:col + q]
    X = raw[:, col + q:col + q + p]
    if log_time:
        if np.any(y <= 0):
            raise DataError(f"{path}: survival times must be positive to log-transform")
        y = np.log(y)
    return Dataset(y, Z, X, delta=delta)


def write_dataset_csv(d: Dataset, path, exp_time: bool = False) -> None:
    """Write a dataset in the same layout read_dataset_csv expects.

    With ``exp_time`` the stored y column is exp(y) (raw times for survival
    files whose in-memory response is log time).
    """
    header = _expected_header(d.q, d.p, d.is_survival)
    y = np.exp(d.y) if exp_time else d.y
    blocks = [y[:, None]]
    if d.is_survival:
        blocks.append(d.delta[:, None])
    blocks += [d.Z, d.X]
    body = np.hstack(blocks)
    np.savetxt(path, body, delimiter=",", header=",".join(header), comments="",
               fmt="%.10g")

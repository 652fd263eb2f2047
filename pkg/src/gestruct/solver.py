"""Iterative coordinate-descent minimizer of the penalized objective.

The objective couples a least-squares lack-of-fit with MCP sparsity penalties
on the main genetic coefficients beta and the interaction multipliers gamma,
plus quadratic structure penalties (lam2/2) * (beta'J beta + sum_k gamma_k'J
gamma_k).  Interactions enter the fit as beta[j] * gamma[k, j], which makes
the "main effects, interactions" hierarchy automatic: an interaction can only
survive if its main effect does.

One outer iteration is: a single coordinate sweep over beta (with gamma and
alpha fixed), a single sweep over the gamma multipliers of currently nonzero
betas, then an exact least-squares update of the unpenalized environment
coefficients alpha.  The objective never increases, so the iteration is
stopped when its relative change drops below ``rel_tol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .data import CoefficientSet, Dataset, SparsityPattern, derive_full_effects
from .errors import DataError, NumericalError
from .penalties import MCPParams, PenaltyMatrix, mcp_value

__all__ = [
    "SolverConfig",
    "FitResult",
    "FitState",
    "Design",
    "make_design",
    "init_state",
    "update_beta",
    "update_gamma",
    "update_alpha",
    "objective",
    "predicted_values",
    "residual_sum_of_squares",
    "single_coordinate_update",
    "fit",
]

MAX_ZTZ_COND = 1e12


@dataclass(frozen=True)
class SolverConfig:
    """Solver controls; ``fit_interactions=False`` freezes gamma at zero,
    reducing the fit to a structured MCP regression on main effects only."""

    mcp: MCPParams
    max_outer_iters: int = 200
    rel_tol: float = 1e-4
    enforce_hierarchy: bool = True
    fit_interactions: bool = True

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise DataError("rel_tol must be > 0")
        if self.max_outer_iters < 1:
            raise DataError("max_outer_iters must be >= 1")


@dataclass(frozen=True)
class FitResult:
    coefficients: CoefficientSet
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    pattern: SparsityPattern

    @property
    def effects(self):
        return derive_full_effects(self.coefficients)

    @property
    def trace_nonincreasing(self):
        return bool(np.all(np.diff(self.objective_trace) <= 1e-10))


@dataclass
class FitState:
    """Mutable iterate owned by a single fit."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


def _collinear_columns(Z):
    """Indices of Z columns explained (R^2 ~ 1) by the remaining columns."""
    n, q = Z.shape
    bad = []
    for k in range(q):
        col = Z[:, k]
        others = np.delete(Z, k, axis=1)
        if others.shape[1] == 0:
            if np.allclose(col, 0):
                bad.append(k)
            continue
        design = np.column_stack([np.ones(n), others])
        coef, *_ = np.linalg.lstsq(design, col, rcond=None)
        resid = col - design @ coef
        denom = np.sum((col - col.mean()) ** 2)
        if denom <= 0 or np.sum(resid ** 2) <= 1e-10 * max(denom, 1.0):
            bad.append(k)
    return bad


@dataclass(frozen=True)
class Design:
    """Precomputed matrices shared by the update steps of one or many fits."""

    d: Dataset
    pm: PenaltyMatrix
    x_t: np.ndarray                # (p, n) transposed genetic block
    z_t: np.ndarray                # (q, n) transposed environment block
    w_t: tuple[np.ndarray, ...] | None   # explicit (p, n) interaction blocks
    colnorm2: np.ndarray           # (q, p) interaction column curvatures
    jindptr: np.ndarray
    jindices: np.ndarray
    jdata: np.ndarray
    jdiag: np.ndarray
    ztz_factor: tuple = field(repr=False, default=None)

    @property
    def explicit(self):
        return self.w_t is not None


def make_design(d: Dataset, pm: PenaltyMatrix) -> Design:
    """Prepare the transposed design blocks, interaction curvatures, sparse
    structure arrays, and the Cholesky factor of Z'Z."""
    if pm.p != d.p:
        raise DataError(f"structure matrix is {pm.p} x {pm.p}, data has p = {d.p}")
    x_t = np.ascontiguousarray(d.X.T)
    if d.interactions is not None:
        w_t = tuple(np.ascontiguousarray(d.interactions[k].T) for k in range(d.q))
        colnorm2 = np.stack([np.mean(d.interactions[k] ** 2, axis=0)
                             for k in range(d.q)])
    else:
        w_t = None
        colnorm2 = (d.Z ** 2).T @ (d.X ** 2) / d.n

    J = pm.J.tocsr()
    ztz = d.Z.T @ d.Z
    cond = np.linalg.cond(ztz)
    if not np.isfinite(cond) or cond >= MAX_ZTZ_COND:
        bad = _collinear_columns(d.Z)
        names = ", ".join(f"z{k + 1}" for k in bad) or "unidentified"
        raise NumericalError(
            f"environment design is rank deficient (condition {cond:.2e}); "
            f"collinear columns: {names}"
        )
    factor = scipy.linalg.cho_factor(ztz)
    return Design(
        d=d, pm=pm, x_t=x_t, z_t=np.ascontiguousarray(d.Z.T),
        w_t=w_t, colnorm2=colnorm2,
        jindptr=J.indptr, jindices=J.indices, jdata=J.data,
        jdiag=J.diagonal(), ztz_factor=factor,
    )


def init_state(design: Design) -> FitState:
    """Null-model start: beta = gamma = 0 and alpha from least squares."""
    d = design.d
    alpha = scipy.linalg.cho_solve(design.ztz_factor, d.Z.T @ d.y)
    return FitState(alpha, np.zeros(d.p), np.zeros((d.q, d.p)))


def _interaction_fit(design: Design, beta, gamma):
    """sum_k W_k (beta * gamma_k) without materializing product blocks."""
    d = design.d
    out = np.zeros(d.n)
    for k in range(d.q):
        coef = beta * gamma[k]
        if not np.any(coef):
            continue
        if design.explicit:
            out += coef @ design.w_t[k]
        else:
            out += d.Z[:, k] * (coef @ design.x_t)
    return out


def _working_design_t(design: Design, gamma):
    """Transposed working main-effect design: columns fold the current
    interaction multipliers into the genetic block."""
    d = design.d
    if not gamma.any():
        return design.x_t  # read-only use by the sweep
    if design.explicit:
        out = design.x_t.copy()
        for k in range(d.q):
            if np.any(gamma[k]):
                out += gamma[k][:, None] * design.w_t[k]
        return out
    mod = np.ascontiguousarray(gamma.T) @ design.z_t  # (p, n)
    mod += 1.0
    mod *= design.x_t
    return mod


def update_beta(state: FitState, design: Design, m: MCPParams) -> None:
    """One coordinate sweep over the main-effect coefficients (in place)."""
    d = design.d
    design_t = _working_design_t(design, state.gamma)
    curv = np.einsum("ji,ji->j", design_t, design_t) / d.n
    res = d.y - d.Z @ state.alpha - state.beta @ design_t
    jbeta = design.pm.J @ state.beta
    _kernels.main_sweep(
        design_t, res, state.beta, curv,
        design.jindptr, design.jindices, design.jdata, design.jdiag,
        jbeta, m.lambda1, m.lambda2, m.r,
    )


def update_gamma(state: FitState, design: Design, m: MCPParams) -> None:
    """One coordinate sweep over the interaction multipliers of currently
    nonzero main effects; multipliers of zero main effects stay frozen."""
    d = design.d
    active = np.flatnonzero(state.beta)
    if active.size == 0:
        return
    base = d.y - d.Z @ state.alpha - state.beta @ design.x_t
    res = base - _interaction_fit(design, state.beta, state.gamma)
    for k in range(d.q):
        jg = design.pm.J @ state.gamma[k]
        if design.explicit:
            _kernels.interaction_sweep_explicit(
                design.w_t[k], state.beta, res, state.gamma[k],
                design.colnorm2[k], active,
                design.jindptr, design.jindices, design.jdata, design.jdiag,
                jg, m.lambda1, m.lambda2, m.r,
            )
        else:
            _kernels.interaction_sweep_product(
                design.x_t, design.z_t[k], state.beta, res,
                state.gamma[k], design.colnorm2[k], active,
                design.jindptr, design.jindices, design.jdata, design.jdiag,
                jg, m.lambda1, m.lambda2, m.r,
            )


def update_alpha(state: FitState, design: Design) -> None:
    """Exact least-squares update of the unpenalized environment coefficients."""
    d = design.d
    partial = d.y - state.beta @ design.x_t \
        - _interaction_fit(design, state.beta, state.gamma)
    state.alpha = scipy.linalg.cho_solve(design.ztz_factor, d.Z.T @ partial)


def _objective_parts(design: Design, state: FitState, m: MCPParams):
    d = design.d
    fitted = d.Z @ state.alpha + state.beta @ design.x_t \
        + _interaction_fit(design, state.beta, state.gamma)
    resid = d.y - fitted
    rss = float(resid @ resid)
    loss = rss / (2.0 * d.n)
    pen = float(np.sum(mcp_value(state.beta, m)))
    pen += float(np.sum(mcp_value(state.gamma, m)))
    if m.lambda2 > 0:
        J = design.pm.J
        quad = float(state.beta @ (J @ state.beta))
        for k in range(d.q):
            quad += float(state.gamma[k] @ (J @ state.gamma[k]))
        pen += 0.5 * m.lambda2 * quad
    return loss + pen, rss


def objective(d: Dataset, pm: PenaltyMatrix, c: CoefficientSet,
              m: MCPParams) -> float:
    """Penalized objective at an arbitrary coefficient set."""
    if c.beta.shape[0] != d.p or c.alpha.shape[0] != d.q:
        raise DataError("coefficient shapes do not match data")
    if pm.p != d.p:
        raise DataError("structure matrix does not match data")
    design = make_design(d, pm)
    state = FitState(c.alpha.copy(), c.beta.copy(), c.gamma.copy())
    val, _ = _objective_parts(design, state, m)
    return val


def predicted_values(d: Dataset, fe) -> np.ndarray:
    """In-sample fit Z a + X b + interaction terms for a FullEffects, using
    the dataset's own interaction representation."""
    fitted = d.Z @ fe.alpha + d.X @ fe.beta
    for k in range(d.q):
        coef = fe.eta[k]
        if not np.any(coef):
            continue
        if d.interactions is not None:
            fitted += d.interactions[k] @ coef
        else:
            fitted += d.Z[:, k] * (d.X @ coef)
    return fitted


def residual_sum_of_squares(d: Dataset, c) -> float:
    """Unpenalized residual sum of squares at a CoefficientSet or FullEffects."""
    fe = derive_full_effects(c) if isinstance(c, CoefficientSet) else c
    resid = d.y - predicted_values(d, fe)
    return float(resid @ resid)


def single_coordinate_update(lin: float, quad: float, cross: float,
                             jdiag: float, m: MCPParams) -> float:
    """Scalar minimizer of
    0.5*quad*b^2 - lin*b + mcp(|b|) + 0.5*lambda2*(jdiag*b^2 + 2*cross*b).

    ``quad`` must be positive.  When quad + lambda2*jdiag exceeds 1/r the
    problem is convex and solved in closed form; otherwise the minimum over
    the finite candidate set of both branches (and zero) is returned.
    """
    if quad <= 0:
        raise DataError("curvature must be > 0")
    return float(_kernels.coordinate_update(
        lin, quad, cross, jdiag, m.lambda1, m.lambda2, m.r))


def fit(d: Dataset, pm: PenaltyMatrix, cfg: SolverConfig,
        init: CoefficientSet | None = None,
        design: Design | None = None) -> FitResult:
    """Run the full iteration to convergence.

    ``init`` warm-starts the iterate (tuning uses the previous penalty
    level's solution); ``design`` reuses precomputed matrices across fits on
    the same data.  Reported gamma entries are zeroed wherever beta is zero,
    so the returned pattern always satisfies the hierarchy.
    """
    if design is None:
        design = make_design(d, pm)
    if init is None:
        state = init_state(design)
    else:
        alpha, beta, gamma = init.copy_arrays()
        if beta.shape[0] != d.p or gamma.shape != (d.q, d.p):
            raise DataError("warm-start shapes do not match data")
        state = FitState(alpha, beta, gamma)

    m = cfg.mcp
    q_prev, _ = _objective_parts(design, state, m)
    trace = [q_prev]
    converged = False
    iterations = 0
    for t in range(1, cfg.max_outer_iters + 1):
        try:
            update_beta(state, design, m)
            if cfg.fit_interactions:
                update_gamma(state, design, m)
            update_alpha(state, design)
        except ValueError as exc:  # non-finite iterate inside a solve
            raise NumericalError(
                f"numerical breakdown at outer iteration {t}: {exc}"
            ) from exc
        q_now, _ = _objective_parts(design, state, m)
        if not np.isfinite(q_now):
            raise NumericalError(
                f"objective became non-finite at outer iteration {t}"
            )
        trace.append(q_now)
        iterations = t
        if abs(q_now - q_prev) / max(abs(q_prev), 1e-12) < cfg.rel_tol:
            converged = True
            break
        q_prev = q_now

    gamma_out = state.gamma.copy()
    if cfg.enforce_hierarchy:
        gamma_out[:, state.beta == 0.0] = 0.0
    coeffs = CoefficientSet(state.alpha, state.beta, gamma_out)
    pattern = SparsityPattern.from_effects(derive_full_effects(coeffs))
    return FitResult(
        coefficients=coeffs,
        objective_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        pattern=pattern,
    )

"""Comparison methods: marginal per-gene analysis, hierarchy-only MCP, and
structured MCP without the hierarchy, plus marginal prescreening.

The marginal approach regresses the response on the environment block, one
genetic column, and its interactions at a time, then pools all candidate
p-values through a Benjamini-Hochberg adjustment.  The hierarchy-only
baseline is the main solver with the structure level set to zero.  The
structure-without-hierarchy baseline penalizes main and interaction
coefficients directly, so it may select an interaction whose main effect is
zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from . import _kernels
from .aft import prepare_aft
from .data import Dataset, FullEffects, SparsityPattern, derive_full_effects
from .errors import DataError, NumericalError
from .penalties import MCPParams, PenaltyMatrix, mcp_value, zero_penalty
from .solver import (
    Design,
    FitResult,
    SolverConfig,
    fit,
    make_design,
)

__all__ = [
    "MarginalResult",
    "bh_adjust",
    "fit_marginal",
    "SmcpResult",
    "fit_smcp",
    "smcp_fitter",
    "fit_hiermcp",
    "hiermcp_fitter",
    "marginal_screen",
]


def bh_adjust(pvals) -> np.ndarray:
    """Step-up Benjamini-Hochberg adjusted p-values, original order."""
    p = np.asarray(pvals, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DataError("p-values must be a nonempty 1-d sequence")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum(1.0, np.minimum.accumulate(ranked[::-1])[::-1])
    out = np.empty(m)
    out[order] = adjusted
    return out


@dataclass(frozen=True)
class MarginalResult:
    """Per-gene marginal tests: raw and FDR-adjusted p-values for each main
    effect and its interactions, the selected sets at the threshold, and the
    corresponding coefficient estimates (zero when unselected)."""

    main_pvalues: np.ndarray           # (p,)
    interaction_pvalues: np.ndarray    # (q, p)
    main_adjusted: np.ndarray
    interaction_adjusted: np.ndarray
    main_coef: np.ndarray
    interaction_coef: np.ndarray
    alpha: np.ndarray
    fdr_level: float

    @property
    def pattern(self) -> SparsityPattern:
        main = frozenset(np.flatnonzero(self.main_adjusted < self.fdr_level).tolist())
        inter = tuple(
            frozenset(np.flatnonzero(row < self.fdr_level).tolist())
            for row in self.interaction_adjusted
        )
        return SparsityPattern(main, inter)

    @property
    def effects(self) -> FullEffects:
        pat = self.pattern
        beta = np.zeros_like(self.main_coef)
        for j in pat.main:
            beta[j] = self.main_coef[j]
        eta = np.zeros_like(self.interaction_coef)
        for k, s in enumerate(pat.interactions):
            for j in s:
                eta[k, j] = self.interaction_coef[k, j]
        return FullEffects(self.alpha, beta, eta)


def _marginal_design_blocks(d: Dataset):
    """Rows, response, shared columns, and per-gene column builder for the
    marginal regressions.  Linear outcomes use raw data with an intercept;
    survival outcomes use the weighted least-squares form restricted to
    positive-weight rows (the transform absorbs the intercept)."""
    if d.is_survival:
        ls, rec = prepare_aft(d)
        keep = np.flatnonzero(rec.weights > 0)  # zero-weight rows carry nothing
        y = ls.y[keep]
        shared = ls.Z[keep]
        X = ls.X[keep]
        W = ls.interactions[:, keep, :]

        def gene_cols(j):
            return np.column_stack([X[:, j]] + [W[k][:, j] for k in range(d.q)])
        return y, shared, gene_cols
    y = d.y
    shared = np.column_stack([np.ones(d.n), d.Z])

    def gene_cols(j):
        xj = d.X[:, j]
        return np.column_stack([xj] + [d.Z[:, k] * xj for k in range(d.q)])
    return y, shared, gene_cols


def fit_marginal(d: Dataset, fdr_level: float = 0.05) -> MarginalResult:
    """One small least-squares model per genetic column: the response on the
    environment block, the column, and its interactions.  Two-sided t-tests
    for the main and interaction coefficients are pooled across all columns
    and Benjamini-Hochberg adjusted; a singular small model contributes
    p-values of one."""
    if d.n <= 2 * d.q + 2:
        raise DataError("marginal analysis needs n > 2q + 2")
    y, shared, gene_cols = _marginal_design_blocks(d)
    q, p = d.q, d.p
    n_rows = y.shape[0]
    n_shared = shared.shape[1]
    n_cols = n_shared + 1 + q
    dof = n_rows - n_cols
    if dof < 1:
        raise DataError("not enough rows for the marginal models")

    main_p = np.ones(p)
    inter_p = np.ones((q, p))
    main_c = np.zeros(p)
    inter_c = np.zeros((q, p))
    for j in range(p):
        design = np.column_stack([shared, gene_cols(j)])
        gram = design.T @ design
        try:
            gram_inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(gram_inv)) or \
                np.linalg.cond(gram) > 1e10:
            continue
        coef = gram_inv @ (design.T @ y)
        resid = y - design @ coef
        sigma2 = float(resid @ resid) / dof
        se = np.sqrt(np.maximum(sigma2 * np.diag(gram_inv), 0.0))
        tested = coef[n_shared:]
        tested_se = se[n_shared:]
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(tested_se > 0, tested / tested_se, 0.0)
        pvals = 2.0 * stats.t.sf(np.abs(tstat), dof)
        main_p[j] = pvals[0]
        inter_p[:, j] = pvals[1:]
        main_c[j] = tested[0]
        inter_c[:, j] = tested[1:]

    pooled = np.concatenate([main_p, inter_p.ravel()])
    adjusted = bh_adjust(pooled)
    main_adj = adjusted[:p]
    inter_adj = adjusted[p:].reshape(q, p)

    # environment coefficients from the shared-block-only regression
    coef, *_ = np.linalg.lstsq(shared, y, rcond=None)
    alpha = coef[-q:]
    return MarginalResult(main_p, inter_p, main_adj, inter_adj,
                          main_c, inter_c, alpha, fdr_level)


# ---------------------------------------------------------------------------
# Structured MCP without the hierarchy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmcpResult:
    """Fit of the direct-coefficient objective; the pattern is allowed to
    violate the hierarchy (an interaction with a zero main effect)."""

    effects: FullEffects
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    pattern: SparsityPattern

    @property
    def trace_nonincreasing(self):
        return bool(np.all(np.diff(self.objective_trace) <= 1e-10))


def _smcp_objective(design: Design, alpha, beta, eta, m: MCPParams):
    d = design.d
    fitted = d.Z @ alpha + beta @ design.x_t
    for k in range(d.q):
        if not np.any(eta[k]):
            continue
        if design.explicit:
            fitted += eta[k] @ design.w_t[k]
        else:
            fitted += d.Z[:, k] * (eta[k] @ design.x_t)
    resid = d.y - fitted
    val = float(resid @ resid) / (2.0 * d.n)
    val += float(np.sum(mcp_value(beta, m))) + float(np.sum(mcp_value(eta, m)))
    if m.lambda2 > 0:
        J = design.pm.J
        quad = float(beta @ (J @ beta))
        for k in range(d.q):
            quad += float(eta[k] @ (J @ eta[k]))
        val += 0.5 * m.lambda2 * quad
    return val


def fit_smcp(d: Dataset, pm: PenaltyMatrix, cfg: SolverConfig,
             init: FullEffects | None = None,
             design: Design | None = None) -> SmcpResult:
    """Cyclic coordinate descent on main and interaction coefficients
    directly (no decomposition): MCP and structure penalties on both, with
    exact least-squares updates of the environment coefficients."""
    if design is None:
        design = make_design(d, pm)
    m = cfg.mcp
    if init is None:
        alpha = scipy.linalg.cho_solve(design.ztz_factor, d.Z.T @ d.y)
        beta = np.zeros(d.p)
        eta = np.zeros((d.q, d.p))
    else:
        alpha = init.alpha.copy()
        beta = init.beta.copy()
        eta = init.eta.copy()

    x_curv = np.mean(d.X ** 2, axis=0)
    ones = np.ones(d.p)
    all_idx = np.arange(d.p)
    q_prev = _smcp_objective(design, alpha, beta, eta, m)
    trace = [q_prev]
    converged = False
    iterations = 0
    for t in range(1, cfg.max_outer_iters + 1):
        fitted = d.Z @ alpha + beta @ design.x_t
        for k in range(d.q):
            if not np.any(eta[k]):
                continue
            if design.explicit:
                fitted += eta[k] @ design.w_t[k]
            else:
                fitted += d.Z[:, k] * (eta[k] @ design.x_t)
        res = d.y - fitted

        jbeta = design.pm.J @ beta
        _kernels.main_sweep(
            design.x_t, res, beta, x_curv,
            design.jindptr, design.jindices, design.jdata, design.jdiag,
            jbeta, m.lambda1, m.lambda2, m.r,
        )
        for k in range(d.q):
            jg = design.pm.J @ eta[k]
            if design.explicit:
                _kernels.interaction_sweep_explicit(
                    design.w_t[k], ones, res, eta[k],
                    design.colnorm2[k], all_idx,
                    design.jindptr, design.jindices, design.jdata,
                    design.jdiag, jg, m.lambda1, m.lambda2, m.r,
                )
            else:
                _kernels.interaction_sweep_product(
                    design.x_t, design.z_t[k], ones, res, eta[k],
                    design.colnorm2[k], all_idx,
                    design.jindptr, design.jindices, design.jdata,
                    design.jdiag, jg, m.lambda1, m.lambda2, m.r,
                )
        partial = d.y - beta @ design.x_t
        for k in range(d.q):
            if not np.any(eta[k]):
                continue
            if design.explicit:
                partial -= eta[k] @ design.w_t[k]
            else:
                partial -= d.Z[:, k] * (eta[k] @ design.x_t)
        alpha = scipy.linalg.cho_solve(design.ztz_factor, d.Z.T @ partial)

        q_now = _smcp_objective(design, alpha, beta, eta, m)
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

    fe = FullEffects(alpha, beta, eta)
    return SmcpResult(
        effects=fe,
        objective_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        pattern=SparsityPattern.from_effects(fe),
    )


def smcp_fitter(d, pm, cfg, prev, design):
    """grid_search adapter for the no-hierarchy baseline."""
    return fit_smcp(d, pm, cfg, init=None if prev is None else prev.effects,
                    design=design)


def fit_hiermcp(d: Dataset, cfg: SolverConfig,
                init=None, design: Design | None = None) -> FitResult:
    """Hierarchy-preserving fit without structure: delegates to the main
    solver with the structure level forced to zero."""
    m = cfg.mcp
    cfg0 = SolverConfig(
        mcp=MCPParams(lambda1=m.lambda1, lambda2=0.0, r=m.r),
        max_outer_iters=cfg.max_outer_iters,
        rel_tol=cfg.rel_tol,
        enforce_hierarchy=cfg.enforce_hierarchy,
        fit_interactions=cfg.fit_interactions,
    )
    if design is None:
        design = make_design(d, zero_penalty(d.p))
    return fit(d, design.pm, cfg0, init=init, design=design)


def hiermcp_fitter(d, pm, cfg, prev, design):
    """grid_search adapter for the no-structure baseline (lambda2 is
    ignored; pair it with a single-zero lambda2 grid)."""
    return fit_hiermcp(d, cfg, init=None if prev is None else prev.coefficients,
                       design=design)


# ---------------------------------------------------------------------------
# Marginal prescreening
# ---------------------------------------------------------------------------

def marginal_screen(d: Dataset, keep: int, mode: str = "individual",
                    ) -> tuple[Dataset, np.ndarray]:
    """Reduce the genetic block to ``keep`` columns by marginal p-values.

    ``individual`` keeps the columns with the smallest main-effect p-values;
    ``region`` keeps the contiguous window of length ``keep`` minimizing the
    sum of p-values.  Returns the reduced dataset and the kept original
    column indices (ascending) for reporting in original coordinates.
    """
    if keep <= 0:
        raise DataError("keep must be positive")
    if keep > d.p:
        raise DataError(f"keep = {keep} exceeds p = {d.p}")
    if mode not in ("individual", "region"):
        raise DataError(f"unknown screening mode {mode!r}")
    pvals = fit_marginal(d).main_pvalues
    if mode == "individual":
        idx = np.sort(np.argsort(pvals, kind="stable")[:keep])
    else:
        sums = np.convolve(pvals, np.ones(keep), mode="valid")
        start = int(np.argmin(sums))
        idx = np.arange(start, start + keep)
    meta = None if d.column_meta is None else tuple(d.column_meta[i] for i in idx)
    reduced = Dataset(
        d.y, d.Z, d.X[:, idx],
        delta=d.delta, column_meta=meta,
        interactions=None if d.interactions is None
        else d.interactions[:, :, idx],
    )
    return reduced, idx

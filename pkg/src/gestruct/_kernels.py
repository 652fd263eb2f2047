"""Compiled inner loops for the coordinate-descent solver.

Every sweep keeps the residual and the sparse structure products (J @ coef)
up to date with rank-one updates; the drivers recompute both from scratch at
the start of each outer iteration to bound floating-point drift.

The scalar subproblem for one coordinate b is
    0.5*a*b^2 - u*b + mcp(|b|; lam1, r)
with a = curvature + lam2*J_diag and u = gradient_term - lam2*cross_term.
For a > 1/r it is convex and has the two-branch closed form (thresholded
below the MCP knee, plain linear beyond it).  For a <= 1/r the problem is
nonconvex and the minimizer is found by evaluating the finite candidate set:
zero, both branch stationary points, and the knee points +-lam1*r.
"""

import numpy as np
from numba import njit

NB_OPTS = dict(cache=True, nogil=True, fastmath=False)


@njit(**NB_OPTS)
def mcp_scalar(v, lam1, r):
    av = abs(v)
    if av >= lam1 * r:
        return 0.5 * lam1 * lam1 * r
    return lam1 * av - 0.5 * av * av / r


@njit(**NB_OPTS)
def _half_objective(b, a, u, lam1, r):
    return 0.5 * a * b * b - u * b + mcp_scalar(b, lam1, r)


@njit(**NB_OPTS)
def scalar_update(u, a, lam1, r):
    """Minimizer of 0.5*a*b^2 - u*b + mcp(|b|; lam1, r) for a > 0."""
    if a > 1.0 / r:
        if abs(u) <= lam1 * r * a:
            mag = abs(u) - lam1
            if mag <= 0.0:
                return 0.0
            if u > 0.0:
                return mag / (a - 1.0 / r)
            return -mag / (a - 1.0 / r)
        return u / a
    # nonconvex scalar problem: enumerate candidate stationary/knee points
    best_b = 0.0
    best_f = _half_objective(0.0, a, u, lam1, r)
    knee = lam1 * r
    for sign in (-1.0, 1.0):
        b = sign * knee
        f = _half_objective(b, a, u, lam1, r)
        if f < best_f:
            best_f = f
            best_b = b
    b = u / a  # outer-branch stationary point
    f = _half_objective(b, a, u, lam1, r)
    if f < best_f:
        best_f = f
        best_b = b
    denom = a - 1.0 / r
    if denom != 0.0:
        mag = abs(u) - lam1
        if mag > 0.0:
            b = mag / denom if u > 0.0 else -mag / denom
            f = _half_objective(b, a, u, lam1, r)
            if f < best_f:
                best_f = f
                best_b = b
    return best_b


@njit(**NB_OPTS)
def coordinate_update(lin, quad, cross, jdiag, lam1, lam2, r):
    """One-coordinate minimizer of
    0.5*quad*b^2 - lin*b + mcp(|b|) + 0.5*lam2*(jdiag*b^2 + 2*cross*b)."""
    return scalar_update(lin - lam2 * cross, quad + lam2 * jdiag, lam1, r)


@njit(**NB_OPTS)
def main_sweep(design_t, res, beta, curv, jindptr, jindices, jdata, jdiag,
               jbeta, lam1, lam2, r):
    """One coordinate sweep over all main-effect coefficients.

    design_t is the (p, n) transposed working design; res the residual for
    the current beta; jbeta the running J @ beta.  All of beta, res, jbeta
    are updated in place.  Coefficients on zero-curvature columns are forced
    to zero.
    """
    p, n = design_t.shape
    for j in range(p):
        old = beta[j]
        cj = curv[j]
        if cj <= 0.0:
            if old != 0.0:
                beta[j] = 0.0
                for t in range(jindptr[j], jindptr[j + 1]):
                    jbeta[jindices[t]] -= jdata[t] * old
            continue
        dot = 0.0
        for i in range(n):
            dot += design_t[j, i] * res[i]
        lin = dot / n + cj * old
        cross = jbeta[j] - jdiag[j] * old
        new = coordinate_update(lin, cj, cross, jdiag[j], lam1, lam2, r)
        if new != old:
            d = new - old
            for i in range(n):
                res[i] -= design_t[j, i] * d
            if lam2 > 0.0:
                for t in range(jindptr[j], jindptr[j + 1]):
                    jbeta[jindices[t]] += jdata[t] * d
            beta[j] = new


@njit(**NB_OPTS)
def interaction_sweep_product(x_t, z_col, mult, res, gamma_k, colnorm2, active,
                              jindptr, jindices, jdata, jdiag, jgamma_k,
                              lam1, lam2, r):
    """Coordinate sweep over one environment column's interaction multipliers
    when interaction regressors are products z_col * X[:, j].

    The design column for coordinate j is mult[j] * z_col * x_t[j, :];
    colnorm2[j] = ||z_col * x_t[j, :]||^2 / n.  Only indices in `active` are
    visited; res and jgamma_k (J @ gamma_k) are updated in place.
    """
    n = res.shape[0]
    for idx in range(active.shape[0]):
        j = active[idx]
        m = mult[j]
        quad = m * m * colnorm2[j]
        if quad <= 0.0:
            continue
        old = gamma_k[j]
        dot = 0.0
        for i in range(n):
            dot += x_t[j, i] * z_col[i] * res[i]
        lin = m * dot / n + quad * old
        cross = jgamma_k[j] - jdiag[j] * old
        new = coordinate_update(lin, quad, cross, jdiag[j], lam1, lam2, r)
        if new != old:
            d = (new - old) * m
            for i in range(n):
                res[i] -= x_t[j, i] * z_col[i] * d
            if lam2 > 0.0:
                dd = new - old
                for t in range(jindptr[j], jindptr[j + 1]):
                    jgamma_k[jindices[t]] += jdata[t] * dd
            gamma_k[j] = new


@njit(**NB_OPTS)
def interaction_sweep_explicit(w_t, mult, res, gamma_k, colnorm2, active,
                               jindptr, jindices, jdata, jdiag, jgamma_k,
                               lam1, lam2, r):
    """Same as interaction_sweep_product but with an explicit (p, n)
    transposed interaction block w_t (design column j = mult[j] * w_t[j, :])."""
    n = res.shape[0]
    for idx in range(active.shape[0]):
        j = active[idx]
        m = mult[j]
        quad = m * m * colnorm2[j]
        if quad <= 0.0:
            continue
        old = gamma_k[j]
        dot = 0.0
        for i in range(n):
            dot += w_t[j, i] * res[i]
        lin = m * dot / n + quad * old
        cross = jgamma_k[j] - jdiag[j] * old
        new = coordinate_update(lin, quad, cross, jdiag[j], lam1, lam2, r)
        if new != old:
            d = (new - old) * m
            for i in range(n):
                res[i] -= w_t[j, i] * d
            if lam2 > 0.0:
                dd = new - old
                for t in range(jindptr[j], jindptr[j + 1]):
                    jgamma_k[jindices[t]] += jdata[t] * dd
            gamma_k[j] = new

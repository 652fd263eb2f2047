import numpy as np
import pytest
from numba import njit

from gestruct import (
    CoefficientSet,
    DataError,
    Dataset,
    MCPParams,
    NumericalError,
    SolverConfig,
    build_spline_penalty,
    fit,
    init_state,
    make_design,
    mcp_value,
    objective,
    single_coordinate_update,
    standardize,
    update_alpha,
    update_beta,
    update_gamma,
    zero_penalty,
)
from gestruct.solver import FitState, _objective_parts

from conftest import small_linear_data


# ---------------------------------------------------------------------------
# Brute-force oracle for the scalar coordinate problem
# ---------------------------------------------------------------------------

@njit(cache=True)
def _scalar_objective(b, lin, quad, cross, jdiag, lam1, lam2, r):
    av = abs(b)
    if av >= lam1 * r:
        pen = 0.5 * lam1 * lam1 * r
    else:
        pen = lam1 * av - 0.5 * av * av / r
    return (0.5 * quad * b * b - lin * b + pen
            + 0.5 * lam2 * (jdiag * b * b + 2.0 * cross * b))


@njit(cache=True)
def brute_force_minimizer(lin, quad, cross, jdiag, lam1, lam2, r, n_grid):
    """Dense grid scan refined by golden-section around the best cell."""
    a_tot = quad + lam2 * jdiag
    limit = abs(lin - lam2 * cross) / a_tot + lam1 * r + 1.0
    lo, hi = -limit, limit
    step = (hi - lo) / n_grid
    best_b = 0.0
    best_f = _scalar_objective(0.0, lin, quad, cross, jdiag, lam1, lam2, r)
    for i in range(n_grid + 1):
        b = lo + i * step
        f = _scalar_objective(b, lin, quad, cross, jdiag, lam1, lam2, r)
        if f < best_f:
            best_f = f
            best_b = b
    # golden-section refinement on [best - step, best + step]
    gr = 0.5 * (np.sqrt(5.0) - 1.0)
    a, c = best_b - step, best_b + step
    x1 = c - gr * (c - a)
    x2 = a + gr * (c - a)
    f1 = _scalar_objective(x1, lin, quad, cross, jdiag, lam1, lam2, r)
    f2 = _scalar_objective(x2, lin, quad, cross, jdiag, lam1, lam2, r)
    for _ in range(200):
        if c - a < 1e-12:
            break
        if f1 < f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - gr * (c - a)
            f1 = _scalar_objective(x1, lin, quad, cross, jdiag, lam1, lam2, r)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + gr * (c - a)
            f2 = _scalar_objective(x2, lin, quad, cross, jdiag, lam1, lam2, r)
    mid = 0.5 * (a + c)
    if (_scalar_objective(mid, lin, quad, cross, jdiag, lam1, lam2, r)
            < best_f):
        return mid
    return best_b


def reference_mcp_cd(y, X, lam1, r=3.0, iters=2000, tol=1e-12):
    """Plain MCP coordinate descent with an intercept, written independently
    of the package solver (cyclic exact scalar updates on raw columns)."""
    n, p = X.shape
    beta = np.zeros(p)
    mu = y.mean()
    res = y - mu
    curv = (X ** 2).sum(axis=0) / n
    for _ in range(iters):
        delta = 0.0
        for j in range(p):
            old = beta[j]
            lin = X[:, j] @ res / n + curv[j] * old
            if curv[j] > 1.0 / r:
                if abs(lin) <= lam1 * r * curv[j]:
                    mag = abs(lin) - lam1
                    new = 0.0 if mag <= 0 else np.sign(lin) * mag / (curv[j] - 1 / r)
                else:
                    new = lin / curv[j]
            else:
                new = brute_force_minimizer(lin, curv[j], 0.0, 0.0, lam1, 0.0,
                                            r, 100000)
            if new != old:
                res -= X[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        old_mu = mu
        shift = res.mean()
        mu += shift
        res -= shift
        delta = max(delta, abs(mu - old_mu))
        if delta < tol:
            break
    return mu, beta


class TestCoordinateUpdate:
    def test_zero_when_threshold_kills(self):
        m = MCPParams(0.3, 0.2, 3)
        # lin - lam2*cross = 0
        assert single_coordinate_update(0.1, 1.0, 0.5, 1.0, m) == 0.0

    def test_unsaturated_example(self):
        m = MCPParams(0.1, 0.0, 3)
        got = single_coordinate_update(0.2, 1.0, 0.0, 0.0, m)
        assert got == pytest.approx(0.15, abs=1e-12)
        oracle = brute_force_minimizer(0.2, 1.0, 0.0, 0.0, 0.1, 0.0, 3.0,
                                       1_000_000)
        assert got == pytest.approx(oracle, abs=1e-6)

    def test_saturated_example(self):
        m = MCPParams(0.1, 0.0, 3)
        got = single_coordinate_update(0.5, 1.0, 0.0, 0.0, m)
        assert got == pytest.approx(0.5, abs=1e-12)
        oracle = brute_force_minimizer(0.5, 1.0, 0.0, 0.0, 0.1, 0.0, 3.0,
                                       1_000_000)
        assert got == pytest.approx(oracle, abs=1e-6)

    def test_rejects_nonpositive_curvature(self):
        with pytest.raises(DataError):
            single_coordinate_update(0.1, 0.0, 0.0, 0.0, MCPParams(0.1))

    def test_random_draws_match_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            quad = rng.uniform(0.05, 2.0)
            jdiag = rng.uniform(0.0, 4.0)
            lam2 = rng.uniform(0.0, 0.5)
            lam1 = rng.uniform(0.005, 0.5)
            r = rng.uniform(1.5, 4.0)
            if quad + lam2 * jdiag <= 1.0 / r:
                continue
            lin = rng.normal()
            cross = rng.normal()
            m = MCPParams(lam1, lam2, r)
            got = single_coordinate_update(lin, quad, cross, jdiag, m)
            oracle = brute_force_minimizer(lin, quad, cross, jdiag, lam1,
                                           lam2, r, 200000)
            assert got == pytest.approx(oracle, abs=1e-5)

    def test_nonconvex_fallback_matches_oracle(self):
        rng = np.random.default_rng(321)
        checked = 0
        while checked < 150:
            quad = rng.uniform(0.02, 0.3)
            jdiag = rng.uniform(0.0, 1.0)
            lam2 = rng.uniform(0.0, 0.1)
            r = rng.uniform(2.0, 4.0)
            if quad + lam2 * jdiag > 1.0 / r:
                continue
            lam1 = rng.uniform(0.01, 0.4)
            lin = rng.normal()
            cross = rng.normal()
            m = MCPParams(lam1, lam2, r)
            got = single_coordinate_update(lin, quad, cross, jdiag, m)
            f_got = _scalar_objective(got, lin, quad, cross, jdiag, lam1,
                                      lam2, r)
            oracle = brute_force_minimizer(lin, quad, cross, jdiag, lam1,
                                           lam2, r, 200000)
            f_oracle = _scalar_objective(oracle, lin, quad, cross, jdiag,
                                         lam1, lam2, r)
            # the minimizer may be non-unique near ties; compare values
            assert f_got <= f_oracle + 1e-8
            checked += 1


class TestObjective:
    def test_all_zero_coefficients(self, small_data):
        d, *_ = small_data
        pm = zero_penalty(d.p)
        c = CoefficientSet.zeros(d.q, d.p)
        m = MCPParams(0.3, 0.1, 3)
        assert objective(d, pm, c, m) == pytest.approx(
            float(d.y @ d.y) / (2 * d.n))

    def test_no_penalty_is_least_squares_loss(self, small_data, rng):
        d, *_ = small_data
        pm = build_spline_penalty(d.p)
        c = CoefficientSet(rng.normal(size=d.q), rng.normal(size=d.p),
                           rng.normal(size=(d.q, d.p)))
        m = MCPParams(0.0, 0.0, 3)
        fitted = d.Z @ c.alpha + d.X @ c.beta
        for k in range(d.q):
            fitted += d.Z[:, k] * (d.X @ (c.beta * c.gamma[k]))
        expected = float(np.sum((d.y - fitted) ** 2)) / (2 * d.n)
        assert objective(d, pm, c, m) == pytest.approx(expected, rel=1e-12)

    def test_matches_naive_recomputation(self, small_data, rng):
        d, *_ = small_data
        pm = build_spline_penalty(d.p)
        c = CoefficientSet(rng.normal(size=d.q),
                           rng.normal(size=d.p) * (rng.random(d.p) < 0.4),
                           rng.normal(size=(d.q, d.p)) * 0.3)
        m = MCPParams(0.21, 0.13, 2.7)
        # naive dense evaluation
        fitted = d.Z @ c.alpha + d.X @ c.beta
        for k in range(d.q):
            for j in range(d.p):
                fitted += d.Z[:, k] * d.X[:, j] * c.beta[j] * c.gamma[k, j]
        val = float(np.sum((d.y - fitted) ** 2)) / (2 * d.n)
        val += sum(mcp_value(v, m) for v in c.beta)
        val += sum(mcp_value(v, m) for v in c.gamma.ravel())
        J = pm.J.toarray()
        val += 0.5 * m.lambda2 * float(c.beta @ J @ c.beta)
        for k in range(d.q):
            val += 0.5 * m.lambda2 * float(c.gamma[k] @ J @ c.gamma[k])
        assert objective(d, pm, c, m) == pytest.approx(val, rel=1e-10)


class TestUpdateSteps:
    def test_beta_sweep_does_not_increase_objective(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        design = make_design(ds, pm)
        m = MCPParams(0.05, 0.08, 3)
        state = init_state(design)
        before, _ = _objective_parts(design, state, m)
        update_beta(state, design, m)
        after, _ = _objective_parts(design, state, m)
        assert after <= before + 1e-10

    def test_gamma_noop_when_beta_zero(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        design = make_design(ds, pm)
        m = MCPParams(0.05, 0.08, 3)
        state = init_state(design)
        gamma_before = state.gamma.copy()
        update_gamma(state, design, m)
        assert np.array_equal(state.gamma, gamma_before)

    def test_gamma_sweep_does_not_increase_objective(self, small_data, rng):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        design = make_design(ds, pm)
        m = MCPParams(0.05, 0.08, 3)
        state = init_state(design)
        update_beta(state, design, m)
        before, _ = _objective_parts(design, state, m)
        update_gamma(state, design, m)
        after, _ = _objective_parts(design, state, m)
        assert after <= before + 1e-10

    def test_alpha_initialization_is_env_only_least_squares(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        design = make_design(ds, zero_penalty(d.p))
        state = init_state(design)
        expected, *_ = np.linalg.lstsq(ds.Z, ds.y, rcond=None)
        assert np.allclose(state.alpha, expected, atol=1e-10)

    def test_alpha_ones_column_gives_mean(self):
        rng = np.random.default_rng(2)
        d = Dataset(rng.normal(size=40), np.ones((40, 1)),
                    rng.normal(size=(40, 2)))
        design = make_design(d, zero_penalty(2))
        state = FitState(np.zeros(1), np.zeros(2), np.zeros((1, 2)))
        update_alpha(state, design)
        assert state.alpha[0] == pytest.approx(d.y.mean())

    def test_alpha_orthonormal_matches_generic(self):
        rng = np.random.default_rng(3)
        n = 64
        Q, _ = np.linalg.qr(rng.normal(size=(n, 3)))
        Z = Q * np.sqrt(n)  # Z'Z = n I
        d = Dataset(rng.normal(size=n), Z, rng.normal(size=(n, 2)))
        design = make_design(d, zero_penalty(2))
        state = FitState(np.zeros(3), np.zeros(2), np.zeros((3, 2)))
        update_alpha(state, design)
        assert np.allclose(state.alpha, Z.T @ d.y / n, atol=1e-10)

    def test_rank_deficient_env_names_columns(self):
        rng = np.random.default_rng(4)
        col = rng.normal(size=30)
        Z = np.column_stack([col, 2 * col, rng.normal(size=30)])
        d = Dataset(rng.normal(size=30), Z, rng.normal(size=(30, 2)))
        with pytest.raises(NumericalError, match="z"):
            make_design(d, zero_penalty(2))


class TestFit:
    def test_huge_lambda1_gives_null_model(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        cfg = SolverConfig(mcp=MCPParams(1e6, 0.1, 3))
        res = fit(ds, pm, cfg)
        assert res.pattern.n_main == 0
        assert res.pattern.n_interactions == 0
        null = objective(ds, pm, CoefficientSet(
            res.coefficients.alpha, np.zeros(d.p), np.zeros((d.q, d.p))),
            cfg.mcp)
        assert res.objective_trace[-1] == pytest.approx(null)

    def test_recovers_single_main_effect(self):
        # one real main effect, low noise: exact support recovery and the
        # estimate matches least squares on the true support
        rng = np.random.default_rng(2024)
        n, p = 200, 3
        Z = np.ones((n, 1))  # intercept-like environment block, unstandardized
        X = rng.normal(size=(n, p))
        y = X[:, 0] * 1.0 + 0.1 * rng.normal(size=n)
        d = Dataset(y, Z, X)
        pm = zero_penalty(p)
        cfg = SolverConfig(mcp=MCPParams(0.2, 0.0, 3), fit_interactions=False)
        res = fit(d, pm, cfg)
        assert sorted(res.pattern.main) == [0]
        ols = np.linalg.lstsq(np.column_stack([np.ones(n), X[:, 0]]), y,
                              rcond=None)[0][1]
        assert abs(res.coefficients.beta[0] - 1.0) < 0.1
        assert res.coefficients.beta[0] == pytest.approx(ols, abs=0.05)

    def test_monotone_trace_and_convergence(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        cfg = SolverConfig(mcp=MCPParams(0.05, 0.08, 3))
        res = fit(ds, pm, cfg)
        assert res.converged
        assert res.trace_nonincreasing
        assert np.all(np.diff(res.objective_trace) <= 1e-10)

    def test_hierarchy_in_reported_result(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        for lam1 in (0.02, 0.05, 0.15):
            res = fit(ds, pm, SolverConfig(mcp=MCPParams(lam1, 0.06, 3)))
            fe = res.effects
            assert not fe.eta[:, fe.beta == 0].any()
            assert res.pattern.satisfies_hierarchy

    def test_fixed_point_after_convergence(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        cfg = SolverConfig(mcp=MCPParams(0.05, 0.08, 3))
        res = fit(ds, pm, cfg)
        assert res.converged
        one_more = fit(ds, pm, SolverConfig(mcp=cfg.mcp, max_outer_iters=1),
                       init=res.coefficients)
        q0 = one_more.objective_trace[0]
        q1 = one_more.objective_trace[-1]
        assert abs(q1 - q0) < cfg.rel_tol * abs(q0)

    def test_deterministic(self, small_data):
        d, *_ = small_data
        ds, _ = standardize(d)
        pm = build_spline_penalty(d.p)
        cfg = SolverConfig(mcp=MCPParams(0.05, 0.08, 3))
        r1 = fit(ds, pm, cfg)
        r2 = fit(ds, pm, cfg)
        assert np.array_equal(r1.coefficients.beta, r2.coefficients.beta)
        assert np.array_equal(r1.coefficients.gamma, r2.coefficients.gamma)
        assert np.array_equal(r1.objective_trace, r2.objective_trace)

    def test_plain_mcp_reduction(self):
        # single constant environment column, interactions disabled: the fit
        # must agree with an independently written plain MCP coordinate
        # descent with an intercept
        rng = np.random.default_rng(77)
        n, p = 80, 10
        X = rng.normal(size=(n, p))
        beta0 = np.zeros(p)
        beta0[:3] = [1.2, -0.9, 0.5]
        y = X @ beta0 + 0.3 * rng.normal(size=n) + 0.7
        d = Dataset(y, np.ones((n, 1)), X)
        lam1 = 0.12
        cfg = SolverConfig(mcp=MCPParams(lam1, 0.0, 3),
                           fit_interactions=False, rel_tol=1e-10,
                           max_outer_iters=3000)
        res = fit(d, zero_penalty(p), cfg)
        mu_ref, beta_ref = reference_mcp_cd(y, X, lam1)
        assert np.max(np.abs(res.coefficients.beta - beta_ref)) < 1e-6
        assert res.coefficients.alpha[0] == pytest.approx(mu_ref, abs=1e-6)

    def test_nonfinite_objective_raises(self):
        # a pathological warm start with enormous values overflows the loss
        rng = np.random.default_rng(5)
        d = Dataset(rng.normal(size=20), rng.normal(size=(20, 1)),
                    rng.normal(size=(20, 2)))
        init = CoefficientSet([0.0], [1e200, -1e200], [[1e160, 1e160]])
        cfg = SolverConfig(mcp=MCPParams(0.1, 0.0, 3))
        with pytest.raises((NumericalError, DataError)):
            fit(d, zero_penalty(2), cfg, init=init)

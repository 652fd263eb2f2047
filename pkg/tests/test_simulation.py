import numpy as np
import pytest

from gestruct import (
    DataError,
    ScenarioSpec,
    gen_e_factors,
    gen_genotypes_a1,
    gen_genotypes_a2,
    gen_response,
    parse_scenario_id,
    simulate_scenario,
    true_coefficients,
)
from gestruct.simulation import (
    _haplotype_frequencies,
    _pair_genotype_conditional,
    calibrate_censoring_rate,
)


class TestScenarioSpec:
    def test_parse_and_defaults(self):
        spec = parse_scenario_id("ar03-m1-linear")
        assert spec.correlation == "ar03"
        assert spec.generator == "a1"
        assert spec.n == 250
        aft = parse_scenario_id("ld05-m2-aft")
        assert aft.generator == "a2"
        assert aft.n == 350

    def test_rejects_unknown(self):
        with pytest.raises(DataError):
            parse_scenario_id("ar99-m1-linear")
        with pytest.raises(DataError):
            parse_scenario_id("ar03-m1")

    def test_all_24_scenarios_enumerate(self):
        corrs = ["ar03", "ar05", "band1", "band2", "ld03", "ld05"]
        ids = [f"{c}-{m}-{o}" for c in corrs for m in ("m1", "m2")
               for o in ("linear", "aft")]
        assert len(ids) == 24
        for sid in ids:
            parse_scenario_id(sid)


class TestGenotypesA1:
    def test_m1_marginals(self):
        rng = np.random.default_rng(0)
        g = gen_genotypes_a1(10000, 20, "ar03", "m1", rng)
        freq0 = (g == 0).mean(axis=0)
        freq1 = (g == 1).mean(axis=0)
        freq2 = (g == 2).mean(axis=0)
        n = 10000
        for target, freq in ((0.91, freq0), (0.08, freq1), (0.01, freq2)):
            se = np.sqrt(target * (1 - target) / n)
            assert np.all(np.abs(freq - target) < 3.5 * se + 1e-9)
        maf = (freq1 + 2 * freq2) / 2
        assert np.allclose(maf, 0.05, atol=0.01)

    def test_m2_alternating_mafs(self):
        rng = np.random.default_rng(1)
        g = gen_genotypes_a1(10000, 10, "band1", "m2", rng)
        maf = ((g == 1).mean(axis=0) + 2 * (g == 2).mean(axis=0)) / 2
        assert np.allclose(maf[0::2], 0.05, atol=0.012)
        assert np.allclose(maf[1::2], 0.15, atol=0.02)
        # second-half category probabilities: (0.73, 0.24, 0.03)
        assert np.allclose((g[:, 1::2] == 0).mean(), 0.73, atol=0.02)

    def test_latent_correlation_decays(self):
        rng = np.random.default_rng(2)
        g = gen_genotypes_a1(10000, 6, "ar05", "m1", rng)
        # adjacent genotype correlation clearly positive, distant near zero
        c1 = np.corrcoef(g[:, 0], g[:, 1])[0, 1]
        c5 = np.corrcoef(g[:, 0], g[:, 5])[0, 1]
        assert c1 > 0.1
        assert abs(c5) < 0.05

    def test_band2_runs(self):
        rng = np.random.default_rng(3)
        g = gen_genotypes_a1(200, 30, "band2", "m1", rng)
        assert set(np.unique(g)) <= {0.0, 1.0, 2.0}


class TestGenotypesA2:
    def test_haplotype_frequencies_sum_to_one(self):
        f = _haplotype_frequencies(0.05, 0.15, 0.3)
        assert f.sum() == pytest.approx(1.0)
        assert np.all(f >= 0)

    def test_infeasible_linkage_rejected(self):
        with pytest.raises(DataError):
            _haplotype_frequencies(0.05, 0.5, 0.99)

    def test_zero_linkage_gives_independence(self):
        cond = _pair_genotype_conditional(0.05, 0.15, 0.0)
        p_b = 0.15
        hwe = [(1 - p_b) ** 2, 2 * p_b * (1 - p_b), p_b ** 2]
        for row in cond:
            assert np.allclose(row, hwe, atol=1e-12)

    def test_full_linkage_copies_locus(self):
        cond = _pair_genotype_conditional(0.1, 0.1, 1.0)
        assert np.allclose(cond, np.eye(3), atol=1e-12)

    def test_hwe_marginals(self):
        rng = np.random.default_rng(4)
        g = gen_genotypes_a2(20000, 2, 0.3, "m1", rng)
        counts = [(g[:, 0] == v).mean() for v in (0, 1, 2)]
        assert counts[0] == pytest.approx(0.9025, abs=0.01)
        assert counts[1] == pytest.approx(0.095, abs=0.008)
        assert counts[2] == pytest.approx(0.0025, abs=0.003)

    def test_adjacent_dependence_increases_with_linkage(self):
        rng = np.random.default_rng(5)
        g3 = gen_genotypes_a2(10000, 10, 0.3, "m1", rng)
        g5 = gen_genotypes_a2(10000, 10, 0.5, "m1", rng)

        def mean_adj_corr(g):
            return np.mean([np.corrcoef(g[:, j], g[:, j + 1])[0, 1]
                            for j in range(g.shape[1] - 1)])
        assert mean_adj_corr(g5) > mean_adj_corr(g3) > 0.05


class TestEFactors:
    def test_structure(self):
        rng = np.random.default_rng(6)
        E = gen_e_factors(10000, rng)
        assert E.shape == (10000, 5)
        assert set(np.unique(E[:, 3])) <= {0.0, 1.0}
        assert set(np.unique(E[:, 4])) <= {0.0, 1.0}
        assert abs(E[:, 3].mean() - 0.5) < 0.02
        assert abs(E[:, 4].mean() - 0.5) < 0.02
        assert abs(E[:, 0].var() - 1.0) < 0.05
        assert abs(np.corrcoef(E[:, 0], E[:, 1])[0, 1] - 0.3) < 0.03


class TestTruth:
    def test_values(self):
        rng = np.random.default_rng(7)
        t = true_coefficients(100, 5, rng)
        beta = t.effects.beta
        eta = t.effects.eta
        assert beta[0] == pytest.approx(np.sin(1.1) + 0.2, abs=1e-12)
        assert beta[0] == pytest.approx(1.09121, abs=1e-5)
        assert eta[0, 5] == pytest.approx(1.2, abs=1e-12)  # position j=6
        assert beta[20] == 0.0
        assert np.all(beta[20:] == 0.0)

    def test_counts_and_hierarchy(self):
        rng = np.random.default_rng(8)
        t = true_coefficients(60, 5, rng)
        assert t.pattern.n_main == 20
        assert t.pattern.n_interactions == 40
        assert t.pattern.satisfies_hierarchy
        assert np.all((t.effects.alpha >= 0.8) & (t.effects.alpha <= 1.2))

    def test_requires_minimum_dimensions(self):
        rng = np.random.default_rng(9)
        with pytest.raises(DataError):
            true_coefficients(19, 5, rng)
        with pytest.raises(DataError):
            true_coefficients(50, 2, rng)


class TestResponses:
    def test_zero_truth_linear_is_noise(self):
        rng = np.random.default_rng(10)
        from gestruct import FullEffects, SparsityPattern
        from gestruct.simulation import TruthSet
        fe = FullEffects.zeros(3, 10)
        truth = TruthSet(fe, SparsityPattern.from_effects(fe))
        Z = rng.normal(size=(5000, 3))
        X = rng.normal(size=(5000, 10))
        y, delta = gen_response(Z, X, truth, "linear", rng)
        assert delta is None
        assert abs(y.var() - 1.0) < 0.08

    def test_linear_variance_decomposition(self):
        rng = np.random.default_rng(11)
        t = true_coefficients(30, 5, rng)
        Z = gen_e_factors(4000, rng)
        X = gen_genotypes_a1(4000, 30, "ar03", "m1", rng)
        y, _ = gen_response(Z, X, t, "linear", rng)
        signal = Z @ t.effects.alpha + X @ t.effects.beta
        for k in range(5):
            signal += Z[:, k] * (X @ t.effects.eta[k])
        assert y.var() == pytest.approx(signal.var() + 1.0, rel=0.08)

    def test_aft_censoring_near_target(self):
        rng = np.random.default_rng(12)
        t = true_coefficients(30, 5, rng)
        fracs = []
        for _ in range(10):
            Z = gen_e_factors(350, rng)
            X = gen_genotypes_a1(350, 30, "ar03", "m1", rng)
            y, delta = gen_response(Z, X, t, "aft", rng)
            fracs.append(1.0 - delta.mean())
        assert abs(np.mean(fracs) - 0.2) < 0.03

    def test_censoring_calibration_bounds(self):
        rng = np.random.default_rng(13)
        signal = rng.normal(size=300)
        rate = calibrate_censoring_rate(signal, rng)
        t = np.exp(rng.choice(signal, 200000) + rng.standard_normal(200000))
        frac = np.mean(-np.expm1(-rate * t))
        assert 0.18 <= frac <= 0.22


class TestSimulateScenario:
    def test_deterministic(self):
        spec = ScenarioSpec("ar03", "m1", "linear", n=60, p=25, q=5, seed=5)
        a = simulate_scenario(spec)
        b = simulate_scenario(spec)
        assert np.array_equal(a.train.y, b.train.y)
        assert np.array_equal(a.train.X, b.train.X)
        assert np.array_equal(a.test.y, b.test.y)
        assert np.array_equal(a.truth.effects.alpha, b.truth.effects.alpha)

    def test_shapes_and_outcome(self):
        spec = ScenarioSpec("ld03", "m2", "aft", n=80, p=25, q=5, seed=6,
                            test_n=30)
        sim = simulate_scenario(spec)
        assert sim.train.n == 80 and sim.train.p == 25
        assert sim.test.n == 30
        assert sim.train.is_survival and sim.test.is_survival
        assert sim.truth.pattern.n_main == 20

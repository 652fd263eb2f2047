"""Synthetic data generation for the benchmark scenarios.

Genotype-like genetic measurements in {0, 1, 2} come from one of two
generators: a latent multivariate normal trichotomized at fixed quantiles
(autoregressive or banded latent correlation), or an adjacent-pair haplotype
model chained into a first-order genotype Markov chain (pairwise linkage
parameterized by a correlation).  Environment measurements are three
continuous and two binary columns.  True effects are sparse and smooth: 20
nonzero main genetic effects and 40 interactions spread over the first three
environment columns, with every interaction sitting on a nonzero main.
Responses are linear with standard normal noise, or censored log survival
times with exponential censoring calibrated to roughly 20% censored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded
from scipy.stats import norm

from .data import Dataset, FullEffects, SparsityPattern
from .errors import DataError

__all__ = [
    "ScenarioSpec",
    "TruthSet",
    "SimulatedData",
    "CORRELATIONS",
    "parse_scenario_id",
    "gen_genotypes_a1",
    "gen_genotypes_a2",
    "gen_e_factors",
    "true_coefficients",
    "calibrate_censoring_rate",
    "gen_response",
    "simulate_scenario",
]

CORRELATIONS = ("ar03", "ar05", "band1", "band2", "ld03", "ld05")
MAFS = ("m1", "m2")
OUTCOMES = ("linear", "aft")

# trichotomization quantiles: minor-allele frequency 0.05 and 0.15
_QUANTILES = {0.05: (0.91, 0.99), 0.15: (0.73, 0.97)}


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario; correlation tag implies the generator
    (latent-normal for ar/band, haplotype chain for ld)."""

    correlation: str
    maf: str
    outcome: str
    n: int | None = None
    p: int = 5000
    q: int = 5
    seed: int = 0
    test_n: int = 100

    def __post_init__(self):
        if self.correlation not in CORRELATIONS:
            raise DataError(f"unknown correlation {self.correlation!r}")
        if self.maf not in MAFS:
            raise DataError(f"unknown MAF setting {self.maf!r}")
        if self.outcome not in OUTCOMES:
            raise DataError(f"unknown outcome {self.outcome!r}")
        if self.n is None:
            object.__setattr__(self, "n", 250 if self.outcome == "linear" else 350)

    @property
    def generator(self):
        return "a2" if self.correlation.startswith("ld") else "a1"

    @property
    def scenario_id(self):
        return f"{self.correlation}-{self.maf}-{self.outcome}"


def parse_scenario_id(text: str) -> ScenarioSpec:
    """Parse an id like ``ar03-m1-linear`` into a spec with defaults."""
    parts = text.strip().lower().split("-")
    if len(parts) != 3:
        raise DataError(
            f"scenario id {text!r} must look like 'ar03-m1-linear'"
        )
    return ScenarioSpec(correlation=parts[0], maf=parts[1], outcome=parts[2])


@dataclass(frozen=True)
class TruthSet:
    """Ground-truth effects and their sparsity pattern."""

    effects: FullEffects
    pattern: SparsityPattern


@dataclass(frozen=True)
class SimulatedData:
    train: Dataset
    test: Dataset
    truth: TruthSet
    spec: ScenarioSpec


def _maf_per_column(p, maf):
    if maf == "m1":
        return np.full(p, 0.05)
    out = np.full(p, 0.05)
    out[1::2] = 0.15  # alternating columns for the mixed setting
    return out


def _latent_ar(n, p, rho, rng):
    lat = np.empty((n, p))
    lat[:, 0] = rng.standard_normal(n)
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        lat[:, j] = rho * lat[:, j - 1] + scale * rng.standard_normal(n)
    return lat


def _latent_banded(n, p, offdiag, rng):
    """Sample latent rows with a banded Toeplitz covariance via its banded
    Cholesky factor; ``offdiag`` lists the correlations at lags 1, 2, ..."""
    bw = len(offdiag)
    ab = np.zeros((bw + 1, p))
    ab[0] = 1.0
    for lag, val in enumerate(offdiag, start=1):
        ab[lag, : p - lag] = val
    cb = cholesky_banded(ab, lower=True)  # fails if not positive definite
    z = rng.standard_normal((n, p))
    lat = z * cb[0]
    for lag in range(1, bw + 1):
        lat[:, lag:] += z[:, :-lag] * cb[lag, : p - lag]
    return lat


def gen_genotypes_a1(n, p, corr, maf, rng) -> np.ndarray:
    """Latent-normal genotypes: trichotomize a unit-variance latent Gaussian
    at the standard normal quantiles fixed by the target allele frequency."""
    if corr == "ar03":
        lat = _latent_ar(n, p, 0.3, rng)
    elif corr == "ar05":
        lat = _latent_ar(n, p, 0.5, rng)
    elif corr == "band1":
        lat = _latent_banded(n, p, [0.3], rng)
    elif corr == "band2":
        lat = _latent_banded(n, p, [0.5, 0.3], rng)
    else:
        raise DataError(f"unknown latent correlation {corr!r}")
    mafs = _maf_per_column(p, maf)
    q1 = np.array([_QUANTILES[m][0] for m in mafs])
    q2 = np.array([_QUANTILES[m][1] for m in mafs])
    t1 = norm.ppf(q1)
    t2 = norm.ppf(q2)
    return (lat > t1).astype(np.float64) + (lat > t2)


def _haplotype_frequencies(p_a, p_b, r_ld):
    """Frequencies of haplotypes (ab, aB, Ab, AB) for adjacent loci with
    minor-allele frequencies p_a, p_b and allelic correlation r_ld."""
    phi = r_ld * np.sqrt(p_a * (1 - p_a) * p_b * (1 - p_b))
    freqs = np.array([
        (1 - p_a) * (1 - p_b) + phi,
        (1 - p_a) * p_b - phi,
        p_a * (1 - p_b) - phi,
        p_a * p_b + phi,
    ])
    if np.any(freqs < 0) or np.any(freqs > 1):
        raise DataError(
            f"infeasible linkage: r_ld={r_ld} with allele frequencies "
            f"({p_a}, {p_b}) gives a haplotype frequency outside [0, 1]"
        )
    return freqs


def _pair_genotype_conditional(p_a, p_b, r_ld):
    """3 x 3 conditional table P(genotype at locus 2 | genotype at locus 1)
    from two independent haplotype draws (random mating)."""
    freqs = _haplotype_frequencies(p_a, p_b, r_ld)
    a_count = np.array([0, 0, 1, 1])  # copies of A per haplotype
    b_count = np.array([0, 1, 0, 1])
    joint = np.zeros((3, 3))
    for h1 in range(4):
        for h2 in range(4):
            g1 = a_count[h1] + a_count[h2]
            g2 = b_count[h1] + b_count[h2]
            joint[g1, g2] += freqs[h1] * freqs[h2]
    marg = joint.sum(axis=1)
    cond = np.zeros((3, 3))
    for g in range(3):
        if marg[g] > 0:
            cond[g] = joint[g] / marg[g]
        else:
            cond[g, g] = 1.0  # unreachable state; keep a valid row
    return cond


def _sample_categorical_rows(probs, rng):
    """Draw one category per row of a stochastic matrix ``probs`` (m, 3)."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    return (u[:, None] > cum).sum(axis=1)


def gen_genotypes_a2(n, p, r_ld, maf, rng) -> np.ndarray:
    """Haplotype-chain genotypes: locus 1 is Hardy-Weinberg multinomial, each
    later locus is drawn from the adjacent-pair conditional given its left
    neighbor, a first-order Markov chain along the sequence."""
    mafs = _maf_per_column(p, maf)
    g = np.empty((n, p), dtype=np.float64)
    p1 = mafs[0]
    hwe = np.array([(1 - p1) ** 2, 2 * p1 * (1 - p1), p1 ** 2])
    g[:, 0] = _sample_categorical_rows(np.tile(hwe, (n, 1)), rng)
    cond_cache = {}
    for j in range(1, p):
        key = (mafs[j - 1], mafs[j])
        if key not in cond_cache:
            cond_cache[key] = _pair_genotype_conditional(key[0], key[1], r_ld)
        cond = cond_cache[key]
        prev = g[:, j - 1].astype(np.intp)
        g[:, j] = _sample_categorical_rows(cond[prev], rng)
    return g


def gen_e_factors(n, rng, q=5, rho=0.3, n_binary=2) -> np.ndarray:
    """Environment block: autoregressive standard normal columns with the
    last ``n_binary`` dichotomized at zero into 0/1 indicators."""
    lat = np.empty((n, q))
    lat[:, 0] = rng.standard_normal(n)
    scale = np.sqrt(1.0 - rho * rho)
    for k in range(1, q):
        lat[:, k] = rho * lat[:, k - 1] + scale * rng.standard_normal(n)
    if n_binary > 0:
        lat[:, q - n_binary:] = (lat[:, q - n_binary:] > 0).astype(np.float64)
    return lat


def true_coefficients(p, q, rng) -> TruthSet:
    """Smooth sparse ground truth: 20 nonzero mains on the first 20 genetic
    columns and 40 interactions on environment columns 1-3, all sitting on
    nonzero mains."""
    if p < 20:
        raise DataError("need p >= 20 for the standard truth")
    if q < 3:
        raise DataError("need q >= 3 for the standard truth")
    beta = np.zeros(p)
    j = np.arange(1, 11)
    beta[0:10] = np.sin(0.2 * j + 0.9) + 0.2
    j = np.arange(11, 16)
    beta[10:15] = 0.5 * (j - 10)
    j = np.arange(16, 21)
    beta[15:20] = 0.5 * (21 - j)

    eta = np.zeros((q, p))
    j = np.arange(1, 6)
    eta[0, 0:5] = 0.2 * j + 0.2
    j = np.arange(6, 11)
    eta[0, 5:10] = 0.2 * (11 - j) + 0.2
    j = np.arange(11, 16)
    eta[1, 10:15] = 0.2 * np.sqrt(3 * j - 32)
    j = np.arange(16, 21)
    eta[1, 15:20] = 0.2 * np.sqrt(63 - 3 * j)
    j = np.arange(1, 11)
    eta[2, 0:10] = -(0.2 * j - 0.9) ** 2 + 1.5
    j = np.arange(11, 21)
    eta[2, 10:20] = -(0.2 * j - 3.2) ** 2 + 1.6

    alpha = rng.uniform(0.8, 1.2, size=q)
    fe = FullEffects(alpha, beta, eta)
    return TruthSet(fe, SparsityPattern.from_effects(fe))


def _signal(Z, X, fe: FullEffects):
    s = Z @ fe.alpha + X @ fe.beta
    for k in range(fe.q):
        if np.any(fe.eta[k]):
            s += Z[:, k] * (X @ fe.eta[k])
    return s


def calibrate_censoring_rate(signal, rng, target=0.2, pilot=100_000,
                             tol=5e-4) -> float:
    """Exponential censoring rate giving the target expected censoring
    fraction for log survival times signal + standard normal noise.

    Uses a pilot of survival times resampled from the observed signals and
    the smooth identity E[censored] = E[1 - exp(-rate * T)], then bisects.
    """
    s = rng.choice(signal, size=pilot, replace=True)
    t = np.exp(s + rng.standard_normal(pilot))

    def frac(rate):
        return float(np.mean(-np.expm1(-rate * t)))

    lo, hi = 0.0, 1.0
    while frac(hi) < target:
        hi *= 4.0
        if hi > 1e12:
            raise DataError("cannot reach the target censoring fraction")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(hi, 1e-12):
            break
    rate = 0.5 * (lo + hi)
    achieved = frac(rate)
    if not 0.19 <= achieved <= 0.21:
        raise DataError(
            f"censoring calibration landed at {achieved:.3f}, outside [0.19, 0.21]"
        )
    return rate


def gen_response(Z, X, truth: TruthSet, outcome, rng, censoring_rate=None):
    """Response draw: ``linear`` returns (y, None); ``aft`` returns observed
    log time and event indicator (y, delta), with exponential censoring at
    ``censoring_rate`` (calibrated here when not supplied)."""
    Z = np.asarray(Z, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    s = _signal(Z, X, truth.effects)
    if outcome == "linear":
        return s + rng.standard_normal(len(s)), None
    if outcome != "aft":
        raise DataError(f"unknown outcome {outcome!r}")
    if censoring_rate is None:
        censoring_rate = calibrate_censoring_rate(s, rng)
    log_t = s + rng.standard_normal(len(s))
    t = np.exp(log_t)
    c = rng.exponential(1.0 / censoring_rate, size=len(s))
    y = np.log(np.minimum(t, c))
    delta = (t <= c).astype(np.float64)
    return y, delta


def _gen_genotypes(spec: ScenarioSpec, n, rng):
    if spec.generator == "a1":
        return gen_genotypes_a1(n, spec.p, spec.correlation, spec.maf, rng)
    r_ld = {"ld03": 0.3, "ld05": 0.5}[spec.correlation]
    return gen_genotypes_a2(n, spec.p, r_ld, spec.maf, rng)


def simulate_scenario(spec: ScenarioSpec, seed=None) -> SimulatedData:
    """Generate one train/test replicate of a scenario.

    ``seed`` (any numpy seed material) overrides ``spec.seed``; the train and
    test sets share the truth draw and, for censored outcomes, one calibrated
    censoring rate.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    truth = true_coefficients(spec.p, spec.q, rng)

    X_tr = _gen_genotypes(spec, spec.n, rng)
    Z_tr = gen_e_factors(spec.n, rng, q=spec.q)
    rate = None
    if spec.outcome == "aft":
        rate = calibrate_censoring_rate(_signal(Z_tr, X_tr, truth.effects), rng)
    y_tr, delta_tr = gen_response(Z_tr, X_tr, truth, spec.outcome, rng,
                                  censoring_rate=rate)

    X_te = _gen_genotypes(spec, spec.test_n, rng)
    Z_te = gen_e_factors(spec.test_n, rng, q=spec.q)
    y_te, delta_te = gen_response(Z_te, X_te, truth, spec.outcome, rng,
                                  censoring_rate=rate)

    train = Dataset(y_tr, Z_tr, X_tr, delta=delta_tr)
    test = Dataset(y_te, Z_te, X_te, delta=delta_te)
    return SimulatedData(train, test, truth, spec)

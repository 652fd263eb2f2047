import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gestruct import (
    DataError,
    MCPParams,
    build_adjacency,
    build_laplacian_penalty,
    build_spline_penalty,
    load_penalty_triplets,
    mcp_value,
    soft_threshold,
    verify_psd,
    zero_penalty,
)
from gestruct.penalties import save_penalty_triplets


def mcp_quadrature(v, lam, r):
    """Independent oracle: numeric quadrature of the defining integrand."""
    knee = min(lam * r, abs(v))
    val, _ = quad(lambda x: lam * max(1 - x / (lam * r), 0.0), 0, abs(v),
                  points=[knee] if knee > 0 else None)
    return val


class TestMcpValue:
    def test_zero(self):
        assert mcp_value(0.0, MCPParams(0.5)) == 0.0

    def test_saturated_closed_form(self):
        # lam=0.1, r=3, v=1 is beyond the knee: value = lam^2 r / 2
        assert mcp_value(1.0, MCPParams(0.1, r=3)) == pytest.approx(0.015)

    def test_quadrature_oracle(self):
        p = MCPParams(0.2, r=3)
        assert mcp_value(0.1, p) == pytest.approx(0.0183333, abs=1e-6)
        assert mcp_value(0.1, p) == pytest.approx(
            mcp_quadrature(0.1, 0.2, 3), abs=1e-10)

    @given(st.floats(-3, 3), st.floats(0.01, 1), st.floats(1.5, 5))
    @settings(max_examples=200, deadline=None)
    def test_matches_quadrature_everywhere(self, v, lam, r):
        got = mcp_value(v, MCPParams(lam, r=r))
        assert got == pytest.approx(mcp_quadrature(v, lam, r), abs=1e-9)

    @given(st.floats(0, 5), st.floats(0, 5))
    @settings(max_examples=100, deadline=None)
    def test_even_and_monotone(self, a, b):
        p = MCPParams(0.3, r=3)
        assert mcp_value(a, p) == mcp_value(-a, p)
        lo, hi = sorted([a, b])
        assert mcp_value(lo, p) <= mcp_value(hi, p) + 1e-15
        assert mcp_value(hi, p) <= 0.3 ** 2 * 3 / 2 + 1e-15

    def test_derivative_by_finite_differences(self):
        p = MCPParams(0.25, r=3)
        h = 1e-7
        for v in np.linspace(0.01, 0.74, 25):  # inside the knee 0.75
            num = (mcp_value(v + h, p) - mcp_value(v - h, p)) / (2 * h)
            assert num == pytest.approx(0.25 * (1 - v / 0.75), abs=1e-6)


class TestSoftThreshold:
    def test_values(self):
        assert soft_threshold(0.5, 0.2) == pytest.approx(0.3)
        assert soft_threshold(-0.5, 0.2) == pytest.approx(-0.3)
        assert soft_threshold(0.1, 0.2) == 0.0

    def test_rejects_negative_threshold(self):
        with pytest.raises(DataError):
            soft_threshold(0.5, -0.1)


def spline_oracle(p):
    """Explicit second-difference operator multiply."""
    H = np.zeros((p - 2, p))
    for i in range(p - 2):
        H[i, i], H[i, i + 1], H[i, i + 2] = 1.0, -2.0, 1.0
    return H.T @ H


class TestSplinePenalty:
    def test_p3(self):
        J = build_spline_penalty(3).J.toarray()
        assert np.allclose(J, [[1, -2, 1], [-2, 4, -2], [1, -2, 1]])
        assert np.allclose(J, spline_oracle(3))

    def test_p4(self):
        J = build_spline_penalty(4).J.toarray()
        expected = [[1, -2, 1, 0], [-2, 5, -4, 1], [1, -4, 5, -2], [0, 1, -2, 1]]
        assert np.allclose(J, expected)
        assert np.allclose(J, spline_oracle(4))

    def test_rejects_small_p(self):
        with pytest.raises(DataError):
            build_spline_penalty(2)

    def test_annihilates_affine_sequences(self):
        pm = build_spline_penalty(60)
        j = np.arange(60.0)
        for a, b in [(0.0, 1.0), (2.5, -0.3), (-4.0, 0.0), (1.3, 7.7)]:
            v = a + b * j
            assert np.max(np.abs(pm.J @ v)) < 1e-10

    def test_row_sums_zero(self):
        pm = build_spline_penalty(35)
        assert np.max(np.abs(np.asarray(pm.J.sum(axis=1)).ravel())) < 1e-12

    def test_psd(self):
        ok, lo = verify_psd(build_spline_penalty(50))
        assert ok and lo >= -1e-8


class TestAdjacency:
    def test_identical_columns(self):
        rng = np.random.default_rng(0)
        col = rng.normal(size=50)
        X = np.column_stack([col, col, rng.normal(size=50)])
        A = build_adjacency(X).toarray()
        assert A[0, 1] == pytest.approx(1.0)
        assert np.allclose(np.diag(A), 0.0)

    def test_negated_column(self):
        rng = np.random.default_rng(1)
        col = rng.normal(size=50)
        X = np.column_stack([col, -col])
        A = build_adjacency(X).toarray()
        assert A[0, 1] == pytest.approx(-1.0)

    def test_constant_column_zero(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([np.ones(30), rng.normal(size=30)])
        A = build_adjacency(X).toarray()
        assert not A.any()

    def test_symmetric_bounded(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 12))
        A = build_adjacency(X)
        assert (abs(A - A.T)).max() < 1e-12
        if A.nnz:
            assert np.all(np.abs(A.data) <= 1.0)

    def test_type_one_error_rate(self):
        # independent noise columns: the off-diagonal fires with probability
        # alpha_cut; Monte-Carlo the rate over many column pairs
        rng = np.random.default_rng(4)
        hits = 0
        trials = 0
        for _ in range(30):
            X = rng.normal(size=(200, 20))
            A = build_adjacency(X, alpha_cut=0.05)
            p = X.shape[1]
            trials += p * (p - 1)
            hits += A.nnz
        rate = hits / trials
        assert 0.03 < rate < 0.07

    def test_needs_four_rows(self):
        with pytest.raises(DataError):
            build_adjacency(np.zeros((3, 2)))


class TestLaplacian:
    def test_two_node(self):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        J = build_laplacian_penalty(A).J.toarray()
        assert np.allclose(J, [[1, -1], [-1, 1]])

    def test_all_zero_adjacency(self):
        J = build_laplacian_penalty(sp.csr_matrix((3, 3))).J.toarray()
        assert not J.any()

    def test_three_node_chain(self):
        A = np.zeros((3, 3))
        A[0, 1] = A[1, 0] = 1.0
        A[1, 2] = A[2, 1] = 1.0
        J = build_laplacian_penalty(sp.csr_matrix(A)).J.toarray()
        s = 1 / np.sqrt(2)
        assert np.allclose(J, [[1, -s, 0], [-s, 1, -s], [0, -s, 1]])

    def test_random_signed_adjacencies_psd(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            p = rng.integers(3, 25)
            A = np.zeros((p, p))
            n_edges = rng.integers(1, max(2, p))
            for _ in range(n_edges):
                i, j = rng.integers(0, p, size=2)
                if i == j:
                    continue
                w = rng.uniform(-1, 1)
                A[i, j] = A[j, i] = w
            ok, lo = verify_psd(build_laplacian_penalty(sp.csr_matrix(A)))
            assert ok, f"not PSD: min eigenvalue {lo}"

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(DataError):
            build_laplacian_penalty(sp.identity(3, format="csr"))


class TestVerifyPsd:
    def test_indefinite(self):
        ok, lo = verify_psd(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
        assert not ok
        assert lo == pytest.approx(-1.0, abs=1e-8)

    def test_rejects_asymmetric(self):
        M = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(DataError):
            verify_psd(M)

    def test_large_dense_fallback(self):
        ok, lo = verify_psd(build_spline_penalty(900))
        assert ok and lo >= -1e-8

    def test_lanczos_branch_on_laplacian(self):
        rng = np.random.default_rng(9)
        p = 3500  # beyond the dense threshold
        rows = rng.integers(0, p, size=4000)
        cols = rng.integers(0, p, size=4000)
        keep = rows != cols
        w = rng.uniform(-1, 1, size=keep.sum())
        A = sp.csr_matrix((w, (rows[keep], cols[keep])), shape=(p, p))
        A = A + A.T
        A.setdiag(0)
        A.eliminate_zeros()
        ok, lo = verify_psd(build_laplacian_penalty(A))
        assert ok and lo >= -1e-6

    def test_zero_penalty(self):
        ok, lo = verify_psd(zero_penalty(10))
        assert ok and lo == pytest.approx(0.0, abs=1e-12)


def test_triplet_file_round_trip(tmp_path):
    pm = build_spline_penalty(6)
    path = tmp_path / "penalty.txt"
    save_penalty_triplets(pm, path)
    back = load_penalty_triplets(path, p=6)
    assert np.allclose(back.J.toarray(), pm.J.toarray())


def test_triplet_file_rejects_asymmetric(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 1 1.0\n")
    with pytest.raises(DataError):
        load_penalty_triplets(path, p=3)

"""Sparsity and structure penalties.

The sparsity penalty is the minimax concave penalty (MCP), applied to every
main genetic coefficient and every interaction multiplier.  Structure enters
through a quadratic form (lam2/2) v'Jv with a sparse symmetric positive
semidefinite matrix J: a second-difference Gram matrix for positionally
adjacent measurements, or a normalized signed graph Laplacian built from
thresholded Pearson correlations for network-structured measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.stats import norm

from .errors import DataError

__all__ = [
    "MCPParams",
    "PenaltyMatrix",
    "mcp_value",
    "soft_threshold",
    "build_spline_penalty",
    "build_adjacency",
    "build_laplacian_penalty",
    "verify_psd",
    "zero_penalty",
    "load_penalty_triplets",
    "save_penalty_triplets",
]

PSD_TOL = -1e-8
SYM_TOL = 1e-12


@dataclass(frozen=True)
class MCPParams:
    """MCP level lambda1, structure level lambda2, concavity r (> 1)."""

    lambda1: float
    lambda2: float = 0.0
    r: float = 3.0

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and self.lambda1 >= 0):
            raise DataError("lambda1 must be finite and >= 0")
        if not (np.isfinite(self.lambda2) and self.lambda2 >= 0):
            raise DataError("lambda2 must be finite and >= 0")
        if not (np.isfinite(self.r) and self.r > 1):
            raise DataError("r must be finite and > 1")


@dataclass(frozen=True)
class PenaltyMatrix:
    """Sparse symmetric p x p structure matrix with a PSD certificate."""

    J: sp.csr_matrix
    kind: str
    psd_checked: bool = False
    min_eigenvalue: float | None = None

    @property
    def p(self):
        return self.J.shape[0]

    def diagonal(self):
        return self.J.diagonal()


def mcp_value(v, params: MCPParams):
    """MCP penalty value; symmetric in v, saturating at lambda1^2 r / 2."""
    lam, r = params.lambda1, params.r
    av = np.abs(np.asarray(v, dtype=np.float64))
    out = np.where(av >= lam * r, 0.5 * lam * lam * r, lam * av - 0.5 * av * av / r)
    if np.isscalar(v) or out.ndim == 0:
        return float(out)
    return out


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0); t must be nonnegative."""
    if np.any(np.asarray(t) < 0):
        raise DataError("threshold must be >= 0")
    arr = np.asarray(v, dtype=np.float64)
    out = np.sign(arr) * np.maximum(np.abs(arr) - t, 0.0)
    if np.isscalar(v) or out.ndim == 0:
        return float(out)
    return out


def build_spline_penalty(p: int) -> PenaltyMatrix:
    """Gram matrix H'H of the (p-2) x p second-difference operator.

    Rows of H are (1, -2, 1) at consecutive offsets, so v'Jv is the sum of
    squared second differences of v: affine sequences are in the null space
    and all row sums vanish.
    """
    if p < 3:
        raise DataError("second differences need p >= 3")
    H = sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(p - 2, p), format="csr")
    J = (H.T @ H).tocsr()
    J.sort_indices()
    return PenaltyMatrix(J, kind="spline", psd_checked=True, min_eigenvalue=0.0)


def build_adjacency(X, alpha_cut: float = 0.05, block: int = 512) -> sp.csr_matrix:
    """Signed adjacency from thresholded Pearson correlations.

    Entry (j, l) is the correlation between columns j and l where its
    magnitude exceeds the Fisher-transformation cutoff
    tanh(z_{1-alpha_cut/2} / sqrt(n-3)), else zero.  The diagonal is zero and
    constant columns have all their correlations defined as zero.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if n < 4:
        raise DataError("adjacency needs n >= 4 for the Fisher cutoff")
    if not 0 < alpha_cut < 1:
        raise DataError("alpha_cut must be in (0, 1)")
    cutoff = np.tanh(norm.ppf(1 - alpha_cut / 2) / np.sqrt(n - 3))

    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    ok = sd > 0
    S = np.where(ok, sd, 1.0)
    Xs = (X - mean) / S
    Xs[:, ~ok] = 0.0  # constant columns contribute zero correlation

    rows, cols, vals = [], [], []
    for start in range(0, p, block):
        stop = min(start + block, p)
        C = (Xs[:, start:stop].T @ Xs) / n  # correlations of a column block
        for local in range(stop - start):
            C[local, start + local] = 0.0
        # clip tiny float excursions outside [-1, 1]
        np.clip(C, -1.0, 1.0, out=C)
        keep = np.abs(C) > cutoff
        r, c = np.nonzero(keep)
        rows.append(r + start)
        cols.append(c)
        vals.append(C[keep])
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(p, p),
    )
    A = ((A + A.T) * 0.5).tocsr()  # exact symmetry against float asymmetry
    A.sort_indices()
    return A


def build_laplacian_penalty(A) -> PenaltyMatrix:
    """Normalized signed Laplacian I - D^{-1/2} A D^{-1/2}.

    Degrees are sums of absolute adjacency weights.  Isolated nodes get a
    zero row and column (no ridge shrinkage for unconnected measurements).
    """
    A = sp.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise DataError("adjacency must be square")
    if A.nnz and abs(A - A.T).max() > SYM_TOL:
        raise DataError("adjacency must be symmetric")
    if np.any(A.diagonal() != 0):
        raise DataError("adjacency must have a zero diagonal")
    p = A.shape[0]
    deg = np.asarray(abs(A).sum(axis=1)).ravel()
    connected = deg > 0
    inv_sqrt = np.where(connected, 1.0 / np.sqrt(np.where(connected, deg, 1.0)), 0.0)
    Dinv = sp.diags(inv_sqrt)
    J = sp.diags(connected.astype(np.float64)) - Dinv @ A @ Dinv
    J = ((J + J.T) * 0.5).tocsr()
    J.sort_indices()
    return PenaltyMatrix(J, kind="laplacian", psd_checked=True, min_eigenvalue=0.0)


def verify_psd(J, tol: float = PSD_TOL) -> tuple[bool, float]:
    """Estimate the smallest eigenvalue; (True, est) iff est >= tol.

    Dense solve up to a few thousand columns (structure matrices here have
    small-end spectra too clustered for plain Lanczos); beyond that a Lanczos
    pass on the spectral complement c*I - J with a power-iteration fallback,
    returning the best available estimate.
    """
    M = J.J if isinstance(J, PenaltyMatrix) else sp.csr_matrix(J, dtype=np.float64)
    if M.shape[0] != M.shape[1]:
        raise DataError("matrix must be square")
    asym = abs(M - M.T)
    if M.nnz and asym.max() > SYM_TOL:
        raise DataError("matrix must be symmetric")
    p = M.shape[0]
    if p <= 3000:
        vals = np.linalg.eigvalsh(M.toarray())
        lo = float(vals[0])
        return lo >= tol, lo
    # Gershgorin upper bound on eigenvalues
    bound = float((np.asarray(abs(M).sum(axis=1)).ravel()).max())
    if bound == 0.0:
        return True, 0.0
    shifted = (sp.identity(p, format="csr") * bound - M).tocsr()
    try:
        top = eigsh(shifted, k=1, which="LA", return_eigenvectors=False,
                    maxiter=2000, tol=1e-7)
        lo = float(bound - top[0])
    except ArpackNoConvergence as exc:
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            lo = float(bound - exc.eigenvalues[-1])
        else:
            rng = np.random.default_rng(0)
            v = rng.standard_normal(p)
            v /= np.linalg.norm(v)
            mu = 0.0
            for _ in range(500):
                w = shifted @ v
                mu = float(v @ w)
                nw = np.linalg.norm(w)
                if nw == 0.0:
                    break
                v = w / nw
            lo = float(bound - mu)
    return lo >= tol, lo


def checked(pm: PenaltyMatrix, strict: bool | None = None) -> PenaltyMatrix:
    """Return a PSD-certified copy; failures raise for built-in kinds and are
    tolerated (recorded) for custom matrices unless ``strict`` overrides."""
    ok, lo = verify_psd(pm)
    if strict is None:
        strict = pm.kind in ("spline", "laplacian", "none")
    if not ok and strict:
        raise DataError(f"structure matrix is not PSD (min eigenvalue {lo:.3e})")
    return PenaltyMatrix(pm.J, pm.kind, psd_checked=ok, min_eigenvalue=lo)


def zero_penalty(p: int) -> PenaltyMatrix:
    """All-zero structure matrix (used when only sparsity is penalized)."""
    return PenaltyMatrix(sp.csr_matrix((p, p)), kind="none", psd_checked=True,
                         min_eigenvalue=0.0)


def load_penalty_triplets(path, p: int | None = None) -> PenaltyMatrix:
    """Read a custom structure matrix from a (row, col, value) text file.

    Indices are 0-based and symmetric entries must both be present.
    """
    raw = np.loadtxt(path, ndmin=2)
    if raw.size == 0:
        raise DataError(f"{path}: empty triplet file")
    if raw.shape[1] != 3:
        raise DataError(f"{path}: expected three columns (row, col, value)")
    rows = raw[:, 0].astype(np.int64)
    cols = raw[:, 1].astype(np.int64)
    if np.any(rows < 0) or np.any(cols < 0):
        raise DataError(f"{path}: negative indices")
    dim = p if p is not None else int(max(rows.max(), cols.max())) + 1
    if rows.max() >= dim or cols.max() >= dim:
        raise DataError(f"{path}: index outside matrix of size {dim}")
    J = sp.csr_matrix((raw[:, 2], (rows, cols)), shape=(dim, dim))
    if (abs(J - J.T)).max() > SYM_TOL:
        raise DataError(f"{path}: symmetric entries must both be present")
    J.sort_indices()
    return PenaltyMatrix(J, kind="custom")


def save_penalty_triplets(pm: PenaltyMatrix, path) -> None:
    coo = pm.J.tocoo()
    np.savetxt(path, np.column_stack([coo.row, coo.col, coo.data]),
               fmt=["%d", "%d", "%.17g"])

"""Dense matrices, norms and singular value tools.

Matrices are plain ``float64`` numpy arrays, C-ordered (row-major) and
marked read-only once validated by :func:`as_matrix`.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import qr, solve_triangular

SVD_SIZE_CAP = 512
POWER_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """An iterative estimator hit its step cap.  ``estimate`` holds the last value."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class RankDeficientError(ValueError):
    pass


def as_matrix(A) -> np.ndarray:
    """Validate ``A`` and return it as a read-only row-major float64 array.

    Raises
    ------
    ValueError
        If ``A`` is not two-dimensional, is empty or has non-finite entries.
    """
    M = np.array(A, dtype=np.float64, order="C", copy=True)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {M.shape}")
    if M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"matrix must have at least one row and column, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    M.flags.writeable = False
    return M


@dataclass(frozen=True)
class SpectralSummary:
    """Norm data for a matrix.

    ``singular_values`` (descending) and ``right_singular_vectors`` (columns)
    are only present when computed by :func:`svd_small`.  ``exact`` tells
    whether the norms came from a full decomposition or from estimators.
    ``sigma_min`` is ``None`` when the matrix is rank deficient to working
    precision.
    """

    frobenius_norm: float
    operator_norm: float
    sigma_min: Optional[float]
    singular_values: Optional[np.ndarray] = None
    right_singular_vectors: Optional[np.ndarray] = None
    exact: bool = False

    def to_dict(self):
        return {
            "frobenius_norm": self.frobenius_norm,
            "operator_norm": self.operator_norm,
            "sigma_min": self.sigma_min,
            "singular_values": None if self.singular_values is None else self.singular_values.tolist(),
            "exact": self.exact,
        }


def frobenius_norm(A) -> float:
    A = np.asarray(A, dtype=np.float64)
    return float(np.sqrt(np.sum(A * A)))


def _start_vectors(n):
    v = np.ones(n) / np.sqrt(n)
    alt = np.where(np.arange(n) % 2 == 0, 1.0, -1.0) / np.sqrt(n)
    return v, alt


def _power(A, v, tol, cap):
    lam = 0.0
    for _ in range(cap):
        w = A.T @ (A @ v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * lam_new:
            return lam_new
        lam = lam_new
    raise ConvergenceError(f"power iteration did not converge in {cap} steps", float(np.sqrt(lam)))


def operator_norm(A, tol=POWER_TOL, max_iter=None) -> float:
    """Largest singular value by power iteration on ``A.T @ A``.

    Runs from the normalized all-ones vector and from the alternating-sign
    vector and keeps the larger result, so a start orthogonal to the top
    singular direction is covered by the other one.  Each run stops when the
    Rayleigh quotient changes by less than ``tol`` relative; the default cap
    is ``100 * n`` iterations per run.

    Raises
    ------
    ConvergenceError
        If a run hits the cap; ``estimate`` carries its last value.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[1]
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.any(A):
        raise ValueError("operator_norm needs a nonzero matrix")
    cap = 100 * n if max_iter is None else max_iter
    lam = max(_power(A, v, tol, cap) for v in _start_vectors(n))
    if lam == 0.0:
        # both starts in the null space; fall back to the column of largest norm
        e = np.zeros(n)
        e[int(np.argmax(np.einsum("ij,ij->j", A, A)))] = 1.0
        lam = _power(A, e, tol, cap)
    return float(np.sqrt(lam))


def _jacobi_rounds(n):
    # round-robin pairing: every pair (p, q) exactly once per sweep, n/2 disjoint pairs per round
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def svd_small(A, size_cap=SVD_SIZE_CAP, max_sweeps=60) -> SpectralSummary:
    """Full singular value decomposition by one-sided (Hestenes) Jacobi.

    Column pairs are orthogonalized by plane rotations until every pair is
    orthogonal to working precision.  Returns descending singular values
    together with orthonormal right singular vectors (as columns).
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if n > size_cap:
        raise ValueError(f"svd_small refuses n={n} > {size_cap}; use the estimators")
    U = A.copy()
    V = np.eye(n)
    rounds = _jacobi_rounds(n)
    eps = np.finfo(float).eps
    # columns below this are rounding noise and would be rotated forever
    negligible = (eps * frobenius_norm(A)) ** 2

    for _ in range(max_sweeps):
        rotated = False
        for P, Q in rounds:
            up, uq = U[:, P], U[:, Q]
            alpha = np.einsum("ij,ij->j", up, up)
            beta = np.einsum("ij,ij->j", uq, uq)
            gamma = np.einsum("ij,ij->j", up, uq)
            act = np.abs(gamma) > m * eps * np.sqrt(alpha * beta)
            act &= (gamma != 0.0) & (alpha > negligible) & (beta > negligible)
            if not np.any(act):
                continue
            rotated = True
            P, Q = P[act], Q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for M in (U, V):
                mp, mq = M[:, P].copy(), M[:, Q]
                M[:, P] = c * mp - s * mq
                M[:, Q] = s * mp + c * mq
        if not rotated:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps", None)

    sigma = np.linalg.norm(U, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    V = V[:, order]
    smin = float(sigma[-1]) if m >= n else 0.0
    return SpectralSummary(
        frobenius_norm=frobenius_norm(A),
        operator_norm=float(sigma[0]),
        sigma_min=smin if smin > 0 else None,
        singular_values=sigma,
        right_singular_vectors=V,
        exact=True,
    )


def sigma_min_estimate(A, tol=POWER_TOL, max_iter=None) -> float:
    """Smallest singular value by inverse power iteration on ``A.T @ A``.

    ``A.T @ A`` is never formed: with ``A = QR`` each solve is two
    triangular solves with ``R``.

    Raises
    ------
    RankDeficientError
        If ``R`` has a diagonal entry below ``n * eps * max|R_ii|``.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if m < n:
        raise RankDeficientError("rank deficient to working precision (fewer rows than columns)")
    R = qr(A, mode="r")[0][:n, :n]
    d = np.abs(np.diag(R))
    if d.min() <= n * np.finfo(float).eps * d.max():
        raise RankDeficientError("rank deficient to working precision")
    cap = 100 * n if max_iter is None else max_iter

    v, _ = _start_vectors(n)
    lam = 0.0
    for _ in range(cap):
        y = solve_triangular(R, v, trans="T")
        w = solve_triangular(R, y)
        lam_new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(lam_new - lam) <= tol * lam_new:
            return float(1.0 / np.sqrt(lam_new))
        lam = lam_new
    raise ConvergenceError(f"inverse iteration did not converge in {cap} steps", float(1.0 / np.sqrt(lam)))


def spectral_summary(A, exact=None, tol=POWER_TOL) -> SpectralSummary:
    """Norms of ``A``: full SVD when ``n`` is small (or ``exact=True``), estimators otherwise."""
    A = np.asarray(A, dtype=np.float64)
    if exact is None:
        exact = A.shape[1] <= SVD_SIZE_CAP
    if exact:
        return svd_small(A)
    try:
        smin = sigma_min_estimate(A, tol)
    except RankDeficientError:
        smin = None
    return SpectralSummary(frobenius_norm(A), operator_norm(A, tol), smin, exact=False)


def hilbert(n: int) -> np.ndarray:
    """Hilbert matrix, ``H[i, j] = 1 / (i + j + 1)`` with 0-based indices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n, dtype=np.float64)
    return as_matrix(1.0 / (i[:, None] + i[None, :] + 1.0))


def numerical_rank(summary: SpectralSummary, eps: float) -> int:
    """Number of singular values ``>= eps``."""
    if summary.singular_values is None:
        raise ValueError("numerical_rank needs the full singular value list (use svd_small)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return int(np.count_nonzero(summary.singular_values >= eps))


def random_gaussian(m, n, seed) -> np.ndarray:
    """Standard normal ``m x n`` test matrix (fixture generator, not from any experiment)."""
    return as_matrix(np.random.default_rng(seed).standard_normal((m, n)))

"""Dense linear-algebra primitives shared by the whole package.

Matrices and vectors are plain float64 numpy arrays (row-major). Every
routine validates its input and works on copies of the data it factors,
so all functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import dpotrf

SYM_RTOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be SPD fails to factor."""


class CholeskyJitterError(np.linalg.LinAlgError):
    """Cholesky failed even after the requested diagonal jitter.

    Attributes:
        pivot: 1-based index of the leading minor that is not positive.
    """

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"needs larger jitter (pivot {pivot} not positive)")


def _as_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _as_vector(b, name: str = "b") -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 1-d array, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} contains non-finite entries")
    return b


def _check_symmetric(A: np.ndarray, name: str = "A") -> None:
    scale = np.abs(A).max()
    if scale == 0.0:
        return
    if np.abs(A - A.T).max() > SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric within {SYM_RTOL} relative")


def spd_solve(A, B):
    """Solve A X = B for symmetric positive-definite A via Cholesky.

    B may be a vector or a matrix of right-hand sides; the result has the
    same shape. Raises NotPositiveDefiniteError if the factorization
    fails.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    _check_symmetric(A)
    B = np.asarray(B, dtype=float)
    if B.ndim not in (1, 2):
        raise ValueError(f"B must be 1-d or 2-d, got shape {B.shape}")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, B is {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ValueError("B contains non-finite entries")
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"not positive definite: {exc}") from exc
    return cho_solve(factor, B, check_finite=False)


def pinv_apply(A, b, rank_tol: float = 1e-12) -> np.ndarray:
    """Minimum-norm least-squares solution A^+ b via SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    """
    A = _as_matrix(A)
    b = _as_vector(b)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, b has length {b.shape[0]}")
    if not 0.0 < rank_tol < 1.0:
        raise ValueError(f"rank_tol must lie in (0, 1), got {rank_tol}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    coeffs = (U.T @ b)[keep] / s[keep]
    return Vt[keep].T @ coeffs


def chol_lower(A, jitter: float = 0.0) -> np.ndarray:
    """Lower-triangular L with L L^T = A + jitter * I.

    The jitter is added to the diagonal before factoring (callers supply
    e.g. an observation-noise variance). On failure the error reports the
    failing pivot so the caller can pick a larger jitter.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    _check_symmetric(A)
    if jitter < 0.0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    shifted = A + jitter * np.eye(A.shape[0])
    L, info = dpotrf(shifted, lower=1, clean=1, overwrite_a=1)
    if info != 0:
        raise CholeskyJitterError(int(info))
    return L


def sym_eigvals(A) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted descending."""
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    _check_symmetric(A)
    return np.linalg.eigvalsh(A)[::-1]

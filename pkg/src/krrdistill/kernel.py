"""Shift-invariant kernel evaluation, Gram assembly, and spectral sampling.

Only the squared-exponential family is implemented:

    k(x, x') = exp(-||x - x'||^2 / (2 l^2))

Gram matrices are assembled from pairwise squared distances computed
coordinate-by-coordinate (scipy's cdist), so gram(spec, A, A) has an
exactly unit diagonal, is exactly symmetric, and duplicated input rows
produce bit-identical Gram rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

FAMILIES = ("squared-exponential",)


@dataclass(frozen=True)
class KernelSpec:
    """Identity and parameters of a shift-invariant kernel."""

    lengthscale: float
    family: str = "squared-exponential"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")


def _as_points(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a point or an n x d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return X


def eval(spec: KernelSpec, x, xp) -> float:
    """Kernel value k(x, x') for a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    if x.shape != xp.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {xp.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise ValueError("non-finite coordinates")
    diff = x - xp
    return float(np.exp(-diff.dot(diff) / (2.0 * spec.lengthscale**2)))


def gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Cross-Gram matrix with entry (i, j) = k(A_i, B_j)."""
    same = A is B
    A = _as_points(A, "A")
    B = A if same else _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    sq = cdist(A, B, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.lengthscale**2))


def grad_first(spec: KernelSpec, s, x) -> np.ndarray:
    """Gradient of k(s, x) with respect to its first argument s."""
    s = np.asarray(s, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if s.shape != x.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {x.shape}")
    return -eval(spec, s, x) * (s - x) / spec.lengthscale**2


def spectral_sample(spec: KernelSpec, count: int, dim: int, rng: np.random.Generator):
    """Draw RFF frequencies and phases for the kernel's spectral density.

    The squared-exponential kernel's Bochner density is N(0, I / l^2).
    Returns (frequencies, phases) with shapes (count, dim) and (count,);
    phases are uniform on [0, 2*pi).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    frequencies = rng.standard_normal((count, dim)) / spec.lengthscale
    phases = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return frequencies, phases

"""Random Fourier feature maps and ridge regression in feature space.

A map with s features sends a point x to

    phi(x)_j = w_j * cos(omega_j . x + b_j)

with frequencies omega drawn from the kernel's spectral density. Plain
maps use the uniform weight sqrt(2/s); weighted maps importance-sample a
frequency pool by empirical ridge leverage and reweight so that the
feature-space Gram stays an unbiased estimate of the pool's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel
from .kernel import KernelSpec
from .numerics import spd_solve


class LeverageDegenerateError(ValueError):
    """All pool leverage scores vanished; the data cannot be weighted."""


@dataclass(frozen=True)
class FeatureMap:
    """Sampled frequencies, phases, and per-feature weights defining phi."""

    s_phi: int
    frequencies: np.ndarray  # (s_phi, d)
    phases: np.ndarray       # (s_phi,), in [0, 2*pi)
    weights: np.ndarray      # (s_phi,), positive
    scheme: str              # "plain" | "weighted"

    def __post_init__(self):
        if self.scheme not in ("plain", "weighted"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.frequencies.ndim != 2 or self.frequencies.shape[0] != self.s_phi:
            raise ValueError("frequencies must be s_phi x d")
        if self.phases.shape != (self.s_phi,) or self.weights.shape != (self.s_phi,):
            raise ValueError("phases/weights must have one entry per feature")
        if not np.all(self.weights > 0):
            raise ValueError("weights must be positive")

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]


@dataclass(frozen=True)
class RffRidgeModel:
    """Ridge regressor in feature space: f(z) = z . weights."""

    weights: np.ndarray
    lam: float
    n: int
    feature_map: FeatureMap | None = None


def plain_map(spec: KernelSpec, s_phi: int, dim: int, rng: np.random.Generator) -> FeatureMap:
    """Plain RFF map: spectral frequencies, uniform weight sqrt(2/s)."""
    frequencies, phases = kernel.spectral_sample(spec, s_phi, dim, rng)
    weights = np.full(s_phi, np.sqrt(2.0 / s_phi))
    return FeatureMap(s_phi, frequencies, phases, weights, "plain")


def _resample_weights(scores: np.ndarray, s_phi: int, rng: np.random.Generator):
    """Importance-resample pool indices by leverage; return (idx, weights).

    Selected feature with pool probability q_i gets weight
    sqrt(2 / (s_phi * M * q_i)), which reduces to the plain sqrt(2/s_phi)
    when all scores are equal.
    """
    total = scores.sum()
    if not total > 0:
        raise LeverageDegenerateError("leverage degenerate: all pool scores are zero")
    M = scores.shape[0]
    q = scores / total
    q = q / q.sum()
    idx = rng.choice(M, size=s_phi, replace=True, p=q)
    weights = np.sqrt(2.0 / (s_phi * M * q[idx]))
    return idx, weights


def weighted_map(
    spec: KernelSpec,
    s_phi: int,
    X,
    lam: float,
    rng: np.random.Generator,
    pool_factor: int = 10,
    resample_rng: np.random.Generator | None = None,
) -> FeatureMap:
    """Leverage-weighted RFF map built from a pool of plain frequencies.

    A pool of M = pool_factor * s_phi frequencies is scored by empirical
    ridge leverage over X,

        score_i = (2/M) c_i^T (Khat + n lam I)^{-1} c_i,

    where c_i = cos(X omega_i + b_i) is the raw cosine column and
    Khat = (2/M) sum_i c_i c_i^T the pool's Gram estimate. s_phi features
    are then resampled with replacement proportionally to the scores.

    ``resample_rng`` lets callers hold the pool fixed while varying the
    resampling draw (used by the unbiasedness checks); by default the
    single stream drives both stages.
    """
    if pool_factor < 2:
        raise ValueError(f"pool_factor must be >= 2, got {pool_factor}")
    X = np.asarray(X, dtype=float)
    n, dim = X.shape
    if not n * lam > 0:
        raise ValueError("n * lam must be positive for leverage scoring")
    M = pool_factor * s_phi
    frequencies, phases = kernel.spectral_sample(spec, M, dim, rng)
    C = np.cos(X @ frequencies.T + phases)  # n x M raw cosine columns
    Khat = (2.0 / M) * (C @ C.T)
    Khat = 0.5 * (Khat + Khat.T)
    Z = spd_solve(Khat + n * lam * np.eye(n), C)
    scores = (2.0 / M) * np.einsum("ij,ij->j", C, Z)
    scores = np.maximum(scores, 0.0)
    idx, weights = _resample_weights(scores, s_phi, resample_rng or rng)
    return FeatureMap(s_phi, frequencies[idx], phases[idx], weights, "weighted")


def apply(feature_map: FeatureMap, X) -> np.ndarray:
    """Map points to feature space: row i is phi(X_i)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be n x d, got shape {X.shape}")
    if X.shape[1] != feature_map.dim:
        raise ValueError(
            f"dimension mismatch: map expects d={feature_map.dim}, got {X.shape[1]}"
        )
    proj = X @ feature_map.frequencies.T + feature_map.phases
    return np.cos(proj) * feature_map.weights


def ridge_fit(Xt, y, lam: float, feature_map: FeatureMap | None = None) -> RffRidgeModel:
    """Fit w = (Xt^T Xt + n s lam I)^{-1} Xt^T y in feature space."""
    Xt = np.asarray(Xt, dtype=float)
    y = np.asarray(y, dtype=float)
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if Xt.ndim != 2 or Xt.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: Xt is {Xt.shape}, y has length {y.shape[0]}")
    n, s_phi = Xt.shape
    A = Xt.T @ Xt + n * s_phi * lam * np.eye(s_phi)
    w = spd_solve(A, Xt.T @ y)
    return RffRidgeModel(weights=w, lam=lam, n=n, feature_map=feature_map)


def ridge_predict(model: RffRidgeModel, Z) -> np.ndarray:
    """Predictions Z . w for feature-space rows Z."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != model.weights.shape[0]:
        raise ValueError(
            f"dimension mismatch: Z is {Z.shape}, model has {model.weights.shape[0]} features"
        )
    return Z @ model.weights

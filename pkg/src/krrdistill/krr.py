"""Exact kernel ridge regression and its complexity measures.

The fitted dual coefficients are alpha = (K + n lam I)^{-1} y, the
in-sample predictor is f(x) = sum_i alpha_i k(X_i, x). The effective
degrees of freedom d_eff = sum_i lam_i / (lam_i + n lam) over the Gram
eigenvalues drive the distilled feature budget s_phi = ceil(d_eff ln
d_eff), and label rescaling normalizes the fit to unit RKHS norm so that
the distillation error bounds apply.

Gram matrices are recomputed from the stored training points unless the
caller passes a precomputed one (``gram=`` keyword), which the experiment
drivers use to avoid redundant O(n^2 d) work.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernel
from .kernel import KernelSpec
from .numerics import spd_solve, sym_eigvals


@dataclass(frozen=True)
class KrrModel:
    """Fitted KRR model: dual coefficients over the training points."""

    alpha: np.ndarray
    X: np.ndarray
    spec: KernelSpec
    lam: float


@dataclass(frozen=True)
class BoundReport:
    """Distillation size, measured losses, and theoretical bounds.

    Losses and bounds are in rescaled-label units; the *_scaled
    properties multiply by rkhs_scale^2 to report in original units.
    """

    d_eff: float
    s_phi: int
    m: int
    compression: float
    train_loss: float
    bound_vs_labels: float
    bound_vs_optimal: float
    loss_vs_labels: float
    loss_vs_optimal: float
    rkhs_scale: float

    def _scaled(self, value: float) -> float:
        return self.rkhs_scale**2 * value

    @property
    def bound_vs_labels_scaled(self) -> float:
        return self._scaled(self.bound_vs_labels)

    @property
    def bound_vs_optimal_scaled(self) -> float:
        return self._scaled(self.bound_vs_optimal)

    @property
    def loss_vs_labels_scaled(self) -> float:
        return self._scaled(self.loss_vs_labels)

    @property
    def loss_vs_optimal_scaled(self) -> float:
        return self._scaled(self.loss_vs_optimal)


def fit(X, y, spec: KernelSpec, lam: float, gram: np.ndarray | None = None) -> KrrModel:
    """Fit alpha = (K + n lam I)^{-1} y on the training data."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError(f"y must have length {n}, got shape {y.shape}")
    K = kernel.gram(spec, X, X) if gram is None else gram
    alpha = spd_solve(K + n * lam * np.eye(n), y)
    return KrrModel(alpha=alpha, X=X, spec=spec, lam=lam)


def predict(model: KrrModel, Z, gram: np.ndarray | None = None) -> np.ndarray:
    """Predictions sum_i alpha_i k(X_i, z) at query points Z."""
    K_zx = kernel.gram(model.spec, Z, model.X) if gram is None else gram
    if K_zx.shape[1] != model.alpha.shape[0]:
        raise ValueError(
            f"dimension mismatch: gram has {K_zx.shape[1]} columns, "
            f"model has {model.alpha.shape[0]} training points"
        )
    return K_zx @ model.alpha


def train_loss(model: KrrModel, X, y, gram: np.ndarray | None = None) -> float:
    """Mean squared in-sample error (1/n) sum |y_i - f(X_i)|^2."""
    y = np.asarray(y, dtype=float)
    resid = y - predict(model, X, gram=gram)
    return float(resid.dot(resid) / y.shape[0])


def effective_dof(K, lam: float) -> float:
    """Effective degrees of freedom sum_i lam_i / (lam_i + n lam).

    Equals Tr(K (K + n lam I)^{-1}). Warns when n*lam exceeds the top
    eigenvalue (the regularizer then dominates every mode and the fit
    underresolves the data).
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    eigs = sym_eigvals(K)
    n = eigs.shape[0]
    floor = -1e-8 * max(1.0, eigs[0])
    if eigs[-1] < floor:
        raise np.linalg.LinAlgError(f"Gram matrix has negative eigenvalue {eigs[-1]:.3e}")
    if n * lam > eigs[0]:
        warnings.warn(
            f"n*lam = {n * lam:.3e} exceeds the top Gram eigenvalue {eigs[0]:.3e}; "
            "the fit is regularization-dominated",
            stacklevel=2,
        )
    eigs = np.maximum(eigs, 0.0)
    return float(np.sum(eigs / (eigs + n * lam)))


def distilled_size(d_eff: float) -> int:
    """Feature budget s_phi = max(1, ceil(d_eff ln d_eff)).

    The distilled set itself has m = s_phi + 1 points.
    """
    if not d_eff > 0:
        raise ValueError(f"d_eff must be positive, got {d_eff}")
    return max(1, math.ceil(d_eff * math.log(d_eff)))


def rkhs_norm(model: KrrModel, gram: np.ndarray | None = None) -> float:
    """RKHS norm sqrt(alpha^T K alpha) of the fitted predictor."""
    K = kernel.gram(model.spec, model.X, model.X) if gram is None else gram
    sq = float(model.alpha @ (K @ model.alpha))
    if sq < -1e-10:
        raise np.linalg.LinAlgError(f"negative RKHS quadratic form {sq:.3e}")
    return math.sqrt(max(sq, 0.0))


def rescale_labels(X, y, spec: KernelSpec, lam: float, gram: np.ndarray | None = None):
    """Scale labels so the refitted predictor has unit RKHS norm.

    Returns (y / r, r, refitted model). alpha is linear in y, so the
    refit is just alpha / r; losses measured on the rescaled problem are
    reported back in original units by multiplying with r^2.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    K = kernel.gram(spec, X, X) if gram is None else gram
    model = fit(X, y, spec, lam, gram=K)
    r = rkhs_norm(model, gram=K)
    if r == 0.0:
        raise ValueError("degenerate labels: fitted predictor has zero RKHS norm")
    rescaled = KrrModel(alpha=model.alpha / r, X=model.X, spec=spec, lam=lam)
    return y / r, r, rescaled

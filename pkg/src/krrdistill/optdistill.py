"""Gradient-based distillation: Adam on synthetic points and labels.

The objective is the predictive loss of the kernel ridge model trained
on the distilled set, evaluated on (a batch of) the real data:

    loss = (1/n) || y_batch - K_XS (K_SS + (m lam + jitter) I)^{-1} y_S ||^2

Gradients with respect to S and y_S are hand-derived reverse mode (no
autodiff): with G = K_SS + (m lam + jitter) I, a = G^{-1} y_S,
res = K_XS a - y_batch and u = (2/n) K_XS^T res,

    d loss / d y_S  = G^{-1} u
    d loss / d K_XS = (2/n) res a^T
    d loss / d G    = -G^{-1} u a^T   (symmetrized when chaining to S)

and both kernel blocks chain to S through the squared-exponential
gradient d k(s, x)/d s = -k(s, x) (s - x) / l^2.

Kernel blocks here are assembled from the norm-expansion identity
||s - x||^2 = ||s||^2 + ||x||^2 - 2 s.x (clamped at zero) so the inner
loop runs on BLAS matmuls; values agree with kernel.gram to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .distill import DistilledSet
from .kernel import KernelSpec
from .numerics import NotPositiveDefiniteError


class NonFiniteLossError(RuntimeError):
    """Optimization aborted on a non-finite checkpoint loss.

    Attributes:
        trace: the OptTrace accumulated up to the abort.
    """

    def __init__(self, iteration: int, trace: "OptTrace"):
        self.trace = trace
        super().__init__(f"non-finite loss at iteration {iteration}")


@dataclass(frozen=True)
class OptConfig:
    """Adam and batching configuration for distillation optimization."""

    iterations: int = 20_000
    learning_rate: float = 0.002
    batch_size: int | None = None  # None = full batch
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    jitter: float = 1e-6
    seed: int = 0
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


@dataclass
class OptTrace:
    """Full-data loss and gradient norms at checkpoint iterations."""

    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    grad_norms_S: list[float] = field(default_factory=list)
    grad_norms_yS: list[float] = field(default_factory=list)

    def record(self, iteration, loss, grad_norm_S, grad_norm_yS):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("checkpoint iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.losses.append(float(loss))
        self.grad_norms_S.append(float(grad_norm_S))
        self.grad_norms_yS.append(float(grad_norm_yS))


def _sq_dists(A, B, a_sq=None, b_sq=None):
    a_sq = np.einsum("ij,ij->i", A, A) if a_sq is None else a_sq
    b_sq = np.einsum("ij,ij->i", B, B) if b_sq is None else b_sq
    sq = a_sq[:, None] + b_sq[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def _self_gram(spec, S, s_sq=None):
    """Symmetrized unit-diagonal self-Gram via the expansion path."""
    sq = _sq_dists(S, S, a_sq=s_sq, b_sq=s_sq)
    sq = 0.5 * (sq + sq.T)
    np.fill_diagonal(sq, 0.0)
    return np.exp(-sq / (2.0 * spec.lengthscale**2))


def _kernel_blocks(spec, S, X_batch):
    """(K_XS, K_SS) via the norm-expansion path; K_SS symmetrized."""
    s_sq = np.einsum("ij,ij->i", S, S)
    sq_xs = _sq_dists(X_batch, S, b_sq=s_sq)
    K_XS = np.exp(-sq_xs / (2.0 * spec.lengthscale**2))
    return K_XS, _self_gram(spec, S, s_sq=s_sq)


def _regularized(K_SS, m, lam, jitter):
    return K_SS + (m * lam + jitter) * np.eye(m)


def kip_loss(S, y_S, X_batch, y_batch, spec: KernelSpec, lam: float, jitter: float = 1e-6) -> float:
    """Distillation loss of the ridge model trained on (S, y_S)."""
    S = np.asarray(S, dtype=float)
    y_S = np.asarray(y_S, dtype=float)
    X_batch = np.asarray(X_batch, dtype=float)
    y_batch = np.asarray(y_batch, dtype=float)
    m = S.shape[0]
    K_XS, K_SS = _kernel_blocks(spec, S, X_batch)
    G = _regularized(K_SS, m, lam, jitter)
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"not positive definite: {exc}") from exc
    alpha = cho_solve(factor, y_S, check_finite=False)
    res = K_XS @ alpha - y_batch
    return float(res.dot(res) / y_batch.shape[0])


def kip_grad(S, y_S, X_batch, y_batch, spec: KernelSpec, lam: float, jitter: float = 1e-6):
    """Exact gradients of kip_loss w.r.t. S and y_S.

    Returns (grad_S, grad_yS) with shapes (m, d) and (m,).
    """
    S = np.asarray(S, dtype=float)
    y_S = np.asarray(y_S, dtype=float)
    X_batch = np.asarray(X_batch, dtype=float)
    y_batch = np.asarray(y_batch, dtype=float)
    m = S.shape[0]
    n = y_batch.shape[0]
    inv_l2 = 1.0 / spec.lengthscale**2

    K_XS, K_SS = _kernel_blocks(spec, S, X_batch)
    G = _regularized(K_SS, m, lam, jitter)
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"not positive definite: {exc}") from exc
    alpha = cho_solve(factor, y_S, check_finite=False)
    res = K_XS @ alpha - y_batch
    u = (2.0 / n) * (K_XS.T @ res)
    grad_yS = cho_solve(factor, u, check_finite=False)

    # Chain through K_XS: dL/dK_XS = (2/n) res a^T.
    V = ((2.0 / n) * np.outer(res, alpha)) * K_XS
    grad_S = -inv_l2 * (V.sum(axis=0)[:, None] * S - V.T @ X_batch)

    # Chain through K_SS: dL/dG = -(G^{-1} u) a^T, both arguments are S.
    B = -np.outer(grad_yS, alpha)
    W = (B + B.T) * K_SS
    grad_S += -inv_l2 * (W.sum(axis=1)[:, None] * S - W @ S)
    return grad_S, grad_yS


def _batches(n, batch_size, rng):
    """Endless minibatch index stream: without replacement per epoch."""
    if batch_size is None or batch_size >= n:
        idx = np.arange(n)
        while True:
            yield idx
    else:
        while True:
            perm = rng.permutation(n)
            for start in range(0, n - batch_size + 1, batch_size):
                yield perm[start : start + batch_size]


def optimize(X, y, init: DistilledSet, spec: KernelSpec, lam: float, cfg: OptConfig):
    """Run Adam on (S, y_S) against the distillation loss.

    Minibatches come without replacement per epoch from a stream seeded
    by cfg.seed; a trailing partial batch is dropped. Checkpoints record
    the loss and gradient norms on the full dataset; a non-finite
    checkpoint loss aborts with the trace attached to the error. Returns
    (DistilledSet, OptTrace) with the final predictor coefficients
    refitted on the optimized set.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    S = init.S.copy()
    y_S = init.y_S.copy()
    m = S.shape[0]
    rng = np.random.default_rng(cfg.seed)
    trace = OptTrace()

    m_S = np.zeros_like(S)
    v_S = np.zeros_like(S)
    m_y = np.zeros_like(y_S)
    v_y = np.zeros_like(y_S)

    def checkpoint(iteration):
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(y_S))):
            raise NonFiniteLossError(iteration, trace)
        loss = kip_loss(S, y_S, X, y, spec, lam, jitter=cfg.jitter)
        if not np.isfinite(loss):
            raise NonFiniteLossError(iteration, trace)
        g_S, g_y = kip_grad(S, y_S, X, y, spec, lam, jitter=cfg.jitter)
        trace.record(iteration, loss, np.linalg.norm(g_S), np.linalg.norm(g_y))

    checkpoint(0)
    batches = _batches(X.shape[0], cfg.batch_size, rng)
    for t in range(1, cfg.iterations + 1):
        idx = next(batches)
        g_S, g_y = kip_grad(S, y_S, X[idx], y[idx], spec, lam, jitter=cfg.jitter)

        m_S = cfg.beta1 * m_S + (1.0 - cfg.beta1) * g_S
        v_S = cfg.beta2 * v_S + (1.0 - cfg.beta2) * g_S**2
        m_y = cfg.beta1 * m_y + (1.0 - cfg.beta1) * g_y
        v_y = cfg.beta2 * v_y + (1.0 - cfg.beta2) * g_y**2
        bias1 = 1.0 - cfg.beta1**t
        bias2 = 1.0 - cfg.beta2**t
        S -= cfg.learning_rate * (m_S / bias1) / (np.sqrt(v_S / bias2) + cfg.eps_adam)
        y_S -= cfg.learning_rate * (m_y / bias1) / (np.sqrt(v_y / bias2) + cfg.eps_adam)

        if t % cfg.checkpoint_every == 0 or t == cfg.iterations:
            checkpoint(t)

    G = _regularized(_self_gram(spec, S), m, lam, cfg.jitter)
    factor = cho_factor(G, lower=True, check_finite=False)
    alpha = cho_solve(factor, y_S, check_finite=False)
    final = DistilledSet(S=S, y_S=y_S, alpha_S=alpha, feature_map=init.feature_map, lam=lam)
    return final, trace

"""Conjugate-gradient ascent on the Stiefel manifold V_k(R^d).

Maximizes the variance-concentration objective of a polynomial surrogate over
orthonormal d x k frames. One iteration: backtracking line search along the
current direction, QR retraction back onto the manifold, Polak-Ribiere
blending (clamped at zero) of the transported old direction with the new
forward-difference gradient. Multiple random restarts hedge against local
maxima; the best frame across restarts wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anova import ObjectiveEvaluator, objective, total_variance
from .errors import DegenerateInputError, DimensionMismatchError, InvalidFrameError, RetractionError
from .polynomials import Polynomial

STIEFEL_TOL = 1e-10


@dataclass(frozen=True)
class LineSearchConfig:
    initial_step: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 30
    sufficient_increase: float = 1e-4

    def __post_init__(self):
        if self.initial_step <= 0 or self.max_halvings <= 0 or self.sufficient_increase <= 0:
            raise ValueError("line search parameters must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink factor must lie in (0, 1), got {self.shrink}")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 100
    fd_step: float = 1e-6
    grad_tol: float = 1e-8
    restarts: int = 5
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    seed: int = 0

    def __post_init__(self):
        if self.max_iters <= 0 or self.fd_step <= 0 or self.grad_tol <= 0 or self.restarts <= 0:
            raise ValueError("optimizer parameters must be positive")


def validate_stiefel(Q, tol: float = STIEFEL_TOL) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] < Q.shape[1]:
        raise InvalidFrameError(f"not a tall matrix: shape {Q.shape}")
    k = Q.shape[1]
    err = np.linalg.norm(Q.T @ Q - np.eye(k))
    if err > tol:
        raise InvalidFrameError(f"||Q^T Q - I||_F = {err:.3e} exceeds {tol:g}")
    return Q


def random_stiefel(d: int, k: int, seed: int) -> np.ndarray:
    """Orthonormalized Gaussian d x k matrix; deterministic per seed."""
    if not 1 <= k <= d:
        raise DimensionMismatchError(f"need d >= k >= 1, got d={d}, k={k}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, k)))
    return Q * np.sign(np.diagonal(R))


def retract(Q, delta: float, M) -> np.ndarray:
    """Q-factor of the thin QR decomposition of Q + delta * M, with the sign
    convention diag(R) > 0 so a zero step returns Q itself."""
    Y = np.asarray(Q, dtype=float) + float(delta) * np.asarray(M, dtype=float)
    Qf, R = np.linalg.qr(Y)
    diag = np.diagonal(R)
    largest = np.abs(diag).max(initial=0.0)
    if largest == 0.0 or np.abs(diag).min() < 1e-12 * largest:
        raise RetractionError(
            f"Q + {delta:g} * M is (numerically) rank deficient; shrink the step"
        )
    return Qf * np.sign(diag)


def parallel_transport(M, Qbar) -> np.ndarray:
    """Move direction M into the tangent space at Qbar:
    (I - Qbar Qbar^T) M + 1/2 Qbar (Qbar^T M - M^T Qbar)."""
    M = np.asarray(M, dtype=float)
    Qbar = np.asarray(Qbar, dtype=float)
    if M.shape != Qbar.shape:
        raise DimensionMismatchError(
            f"direction shape {M.shape} does not match frame shape {Qbar.shape}"
        )
    QtM = Qbar.T @ M
    return M - Qbar @ QtM + 0.5 * Qbar @ (QtM - M.T @ Qbar)


def tangent_project(G, Q) -> np.ndarray:
    """Orthogonal projection of G onto the tangent space at Q (used for the
    stopping criterion)."""
    sym = 0.5 * (Q.T @ G + G.T @ Q)
    return G - Q @ sym


def _fd_gradient(evaluator: ObjectiveEvaluator, Q, h: float, base: float) -> np.ndarray:
    """Forward differences entry by entry; the perturbed frames are used raw,
    the objective being defined on all of R^{d x k}."""
    Q = np.asarray(Q, dtype=float)
    grad = np.empty_like(Q)
    for i in range(Q.shape[0]):
        for j in range(Q.shape[1]):
            P = Q.copy()
            P[i, j] += h
            grad[i, j] = (evaluator.value(P) - base) / h
    return grad


def fd_gradient(p: Polynomial, Q, h: float) -> np.ndarray:
    """Forward-difference gradient of the rotation objective at Q (kd + 1
    objective evaluations)."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    Q = np.asarray(Q, dtype=float)
    evaluator = ObjectiveEvaluator(p, Q.shape[1])
    return _fd_gradient(evaluator, Q, h, evaluator.value(Q))


def _line_search(evaluator, Q, M, cfg: OptimizerConfig):
    """Backtracking search along Q + delta * M. Returns (delta, frame, value)
    of the accepted step, or (0.0, Q, value at Q) if no step was accepted.
    Accepted steps satisfy the sufficient-increase condition and never
    decrease the objective.

    The sufficient-increase slope is measured along the retracted curve
    delta -> retract(Q, delta, M), not along the raw ray: the objective is
    scale-sensitive off the manifold, so the raw directional derivative is
    dominated by the normal component that retraction removes, which would
    stall the search far from a maximizer."""
    ls = cfg.line_search
    f0 = evaluator.value(Q)
    try:
        slope = (evaluator.value(retract(Q, cfg.fd_step, M)) - f0) / cfg.fd_step
    except RetractionError:
        slope = (evaluator.value(Q + cfg.fd_step * M) - f0) / cfg.fd_step
    delta = ls.initial_step
    for _ in range(ls.max_halvings + 1):
        try:
            candidate = retract(Q, delta, M)
        except RetractionError:
            delta *= ls.shrink
            continue
        f_new = evaluator.value(candidate)
        if f_new >= f0 + ls.sufficient_increase * delta * slope and f_new >= f0:
            return delta, candidate, f_new
        delta *= ls.shrink
    return 0.0, Q, f0


def line_search(p: Polynomial, Q, M, cfg: OptimizerConfig) -> float:
    """Step length for one backtracking line search from Q along M; 0.0 means
    no step was accepted (the caller should restart with steepest ascent)."""
    evaluator = ObjectiveEvaluator(p, np.asarray(Q).shape[1])
    delta, _, _ = _line_search(evaluator, np.asarray(Q, dtype=float), np.asarray(M, dtype=float), cfg)
    return delta


def optimize(p: Polynomial, k: int, cfg: OptimizerConfig | None = None,
             callback=None):
    """Maximize the rotation objective over V_k(R^d).

    Runs `cfg.restarts` independent CG ascents from random orthonormal frames
    (seeds cfg.seed, cfg.seed + 1, ...) and returns the best (frame, value)
    pair. Each run stops at max_iters, when the tangent gradient norm drops
    below grad_tol, or when even a steepest-ascent line search stalls.
    `callback(restart, iteration, Q, value)` is invoked at the start point and
    after every accepted step.
    """
    cfg = cfg or OptimizerConfig()
    if total_variance(p) <= 0.0:
        raise DegenerateInputError("surrogate has zero variance; nothing to rotate")
    d = p.n_vars
    if not 1 <= k <= d:
        raise DimensionMismatchError(f"need 1 <= k <= {d}, got k={k}")
    evaluator = ObjectiveEvaluator(p, k)
    h = cfg.fd_step
    best_Q, best_f = None, -np.inf
    for restart in range(cfg.restarts):
        Q = random_stiefel(d, k, cfg.seed + restart)
        f = evaluator.value(Q)
        g = _fd_gradient(evaluator, Q, h, f)
        M = g.copy()
        if callback is not None:
            callback(restart, 0, Q, f)
        for iteration in range(1, cfg.max_iters + 1):
            if np.linalg.norm(tangent_project(g, Q)) < cfg.grad_tol:
                break
            delta, Q_new, f_new = _line_search(evaluator, Q, M, cfg)
            if delta == 0.0:
                # stalled CG direction: fall back to steepest ascent once
                M = g.copy()
                delta, Q_new, f_new = _line_search(evaluator, Q, M, cfg)
                if delta == 0.0:
                    break
            g_new = _fd_gradient(evaluator, Q_new, h, f_new)
            denom = float((g * g).sum())
            beta = max(0.0, float((g_new * (g_new - g)).sum()) / denom) if denom > 0 else 0.0
            M = g_new + beta * parallel_transport(M, Q_new)
            Q, g, f = Q_new, g_new, f_new
            if callback is not None:
                callback(restart, iteration, Q, f)
        if f > best_f:
            best_Q, best_f = Q, f
    return best_Q, objective(p, best_Q, k)

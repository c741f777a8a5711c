"""Variance decomposition of polynomials under the standard Gaussian product
measure on R^n.

Everything here is exact (up to floating point): monomial moments come from
the double-factorial rule, the cumulative variances D_u from the double sum

    D_u(p) + f0^2 = sum_{a,b} c_a c_b M(a_u + b_u) M(a_uc) M(b_uc),

per-subset variances from the inclusion-exclusion recursion over subsets, and
the rotation objective from its telescoping form over the prefixes {1..i}.
Subsets of variables are given with 1-based indices throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError, InvalidFrameError
from .polynomials import Polynomial, _composition_plan, compose_polynomial, enumerate_total_degree

# Variances are mathematically non-negative; cancellation noise below this
# magnitude is clamped to zero.
NEGATIVE_VARIANCE_TOL = 1e-9

# Frobenius tolerance on Q^T Q - I before a frame is rejected.
FRAME_TOL = 1e-8


@lru_cache(maxsize=None)
def _double_factorial(n: int) -> int:
    # (-1)!! := 1, so a zero exponent contributes factor 1
    if n <= 0:
        return 1
    return n * _double_factorial(n - 2)


def gaussian_moment(alpha) -> float:
    """E[x^alpha] for x ~ N(0, I): prod (alpha_i - 1)!! if all entries are
    even, else 0."""
    out = 1.0
    for a in alpha:
        a = int(a)
        if a < 0:
            raise ValueError(f"negative exponent in {tuple(alpha)}")
        if a % 2:
            return 0.0
        out *= _double_factorial(a - 1)
    return out


def _moment_table(max_exp: int) -> np.ndarray:
    """table[e] = E[x^e] for a scalar standard normal, e = 0..max_exp."""
    table = np.zeros(max_exp + 1)
    for e in range(0, max_exp + 1, 2):
        table[e] = _double_factorial(e - 1)
    return table


def _validate_subset(u, n_vars: int) -> tuple[int, ...]:
    """Normalize a subset of 1-based variable indices; empty is allowed."""
    members = tuple(sorted({int(j) for j in u}))
    for j in members:
        if not 1 <= j <= n_vars:
            raise DimensionMismatchError(
                f"variable index {j} out of range 1..{n_vars}"
            )
    return members


def mean_value(p: Polynomial) -> float:
    """Integral of p against the standard Gaussian measure."""
    E, c = p.exponent_matrix()
    if len(c) == 0:
        return 0.0
    table = _moment_table(int(E.max(initial=0)))
    return float(c @ table[E].prod(axis=1))


def d_u(p: Polynomial, u) -> float:
    """Cumulative variance D_u(p): total variance of all ANOVA terms f_v with
    v a subset of u. D of the empty set is 0 by convention."""
    members = _validate_subset(u, p.n_vars)
    if not members:
        return 0.0
    E, c = p.exponent_matrix()
    if len(c) == 0:
        return 0.0
    idx = np.array([j - 1 for j in members], dtype=np.int64)
    comp = np.array([j for j in range(p.n_vars) if j + 1 not in members],
                    dtype=np.int64)
    table = _moment_table(2 * int(E.max(initial=0)))
    tails = table[E[:, comp]].prod(axis=1)
    w = c * tails
    active = w != 0.0
    f0 = mean_value(p)
    if not active.any():
        return -f0 * f0 if f0 else 0.0
    Eu = E[np.ix_(active, idx)]
    wa = w[active]
    pair = table[Eu[:, None, :] + Eu[None, :, :]].prod(axis=2)
    return float(wa @ pair @ wa - f0 * f0)


def _sigma_table(p: Polynomial, members: tuple[int, ...]) -> dict:
    """sigma^2_v for every subset v of `members`, by the recursion
    sigma^2_v = D_v - sum over proper subsets, bottom-up with clamping."""
    sigma = {(): 0.0}
    for size in range(1, len(members) + 1):
        for combo in itertools.combinations(members, size):
            val = d_u(p, combo)
            for sub_size in range(size):
                for sub in itertools.combinations(combo, sub_size):
                    val -= sigma[sub]
            if -NEGATIVE_VARIANCE_TOL <= val < 0.0:
                val = 0.0
            sigma[combo] = val
    return sigma


def sigma_sq_u(p: Polynomial, u) -> float:
    """Variance sigma^2_u of the single ANOVA term of p supported on u."""
    members = _validate_subset(u, p.n_vars)
    return _sigma_table(p, members)[members]


def total_variance(p: Polynomial) -> float:
    """sigma^2(p) = E[p^2] - (E[p])^2, straight from monomial moments."""
    return d_u(p, range(1, p.n_vars + 1))


def sensitivity(p: Polynomial, u) -> float:
    """Sensitivity coefficient s_u = sigma^2_u / sigma^2. The coefficients of
    all subsets sum to 1 for any non-constant polynomial."""
    var = total_variance(p)
    if var <= 0.0:
        raise DegenerateInputError(
            "polynomial has zero variance; sensitivities are undefined"
        )
    return sigma_sq_u(p, u) / var


@dataclass(frozen=True)
class WeightScheme:
    """Subset weights 1 - exp(-max u) for subsets of the first k variables,
    and 1 for every subset reaching past k."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"truncation dimension must be >= 1, got {self.k}")

    def weight(self, u) -> float:
        members = tuple(u)
        if not members:
            raise ValueError("weights are defined for non-empty subsets only")
        top = max(members)
        if top <= self.k:
            return 1.0 - math.exp(-top)
        return 1.0


def mean_dimension(p: Polynomial, scheme: WeightScheme) -> float:
    """Weighted effective dimension: sum over non-empty subsets of
    weight(u) * s_u(p). Exponential in n_vars; intended for small n."""
    if scheme.k > p.n_vars:
        raise DimensionMismatchError(
            f"truncation k={scheme.k} exceeds n_vars={p.n_vars}"
        )
    var = total_variance(p)
    if var <= 0.0:
        raise DegenerateInputError(
            "polynomial has zero variance; mean dimension is undefined"
        )
    sigma = _sigma_table(p, tuple(range(1, p.n_vars + 1)))
    return sum(scheme.weight(u) * val for u, val in sigma.items() if u) / var


def objective(p: Polynomial, Q, k: int) -> float:
    """Rotation objective: the weighted variance concentration of p(Qy),

        sum_{i=1..k} exp(-i) * (D_{1..i} - D_{1..i-1}),

    which telescopes the direct sum of exp(-max u) * sigma^2_u over all
    non-empty subsets u of {1..k}. Q must be an orthonormal frame."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape != (p.n_vars, k):
        raise DimensionMismatchError(
            f"expected a {p.n_vars} x {k} frame, got shape {Q.shape}"
        )
    gram = Q.T @ Q
    if np.linalg.norm(gram - np.eye(k)) > FRAME_TOL:
        raise InvalidFrameError(
            "columns of Q are not orthonormal within tolerance "
            f"{FRAME_TOL:g} (||Q^T Q - I||_F = {np.linalg.norm(gram - np.eye(k)):.3e})"
        )
    composed = compose_polynomial(p, Q)
    total = 0.0
    d_prev = d_u(composed, ())
    for i in range(1, k + 1):
        d_i = d_u(composed, range(1, i + 1))
        total += math.exp(-i) * (d_i - d_prev)
        d_prev = d_i
    return total


class ObjectiveEvaluator:
    """Repeated-evaluation path for the rotation objective.

    The prefix variances D_{1..i} of the composed polynomial are quadratic
    forms in its coefficient vector with Q-independent Gram matrices, so the
    whole objective collapses to c(Q)^T W c(Q) for one precomputed W. Used by
    the optimizer, where the objective is evaluated thousands of times; agrees
    with objective() up to floating-point reassociation. No orthonormality
    check is applied: the finite-difference gradient probes off-manifold."""

    def __init__(self, p: Polynomial, k: int):
        if not 1 <= k <= p.n_vars:
            raise DimensionMismatchError(
                f"need 1 <= k <= n_vars, got k={k}, n_vars={p.n_vars}"
            )
        m = max(p.degree, 0)
        self.n_vars = p.n_vars
        self.k = k
        self._plan = _composition_plan(p.n_vars, k, m)
        self._cvec = self._plan.coefficient_vector(p)
        G = np.array(enumerate_total_degree(k, m), dtype=np.int64)
        table = _moment_table(2 * m)
        m0 = table[G].prod(axis=1)
        prev = np.outer(m0, m0)  # D_empty + f0^2 = f0^2
        W = np.zeros_like(prev)
        for i in range(1, k + 1):
            pair = table[G[:, None, :i] + G[None, :, :i]].prod(axis=2)
            tails = table[G[:, i:]].prod(axis=1)
            cur = pair * np.outer(tails, tails)
            W += math.exp(-i) * (cur - prev)
            prev = cur
        self._W = W

    def value(self, Q) -> float:
        cq = self._plan.apply(Q, self._cvec)
        return float(cq @ self._W @ cq)

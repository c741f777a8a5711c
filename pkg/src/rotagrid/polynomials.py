"""Sparse multivariate polynomials in the monomial basis.

A polynomial is a canonical map from exponent vectors (tuples of non-negative
ints, one entry per variable) to nonzero real coefficients. The module also
provides the total-degree basis enumeration and composition with a linear map,
p -> p(Qy), expanded back into canonical monomial form via the multinomial
theorem. Composition is the hot path of the rotation search, so the expansion
bookkeeping (which products of Q entries feed which output monomial) is
precomputed once per (n_vars, n_out, degree) and cached.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatchError


def _weak_compositions(total, parts):
    """Yield all tuples of `parts` non-negative ints summing to `total`,
    first coordinate descending (graded-lex order within one degree)."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _weak_compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_total_degree(d: int, m: int) -> list[tuple[int, ...]]:
    """All exponent vectors alpha in N_0^d with |alpha|_1 <= m.

    The zero vector comes first; within each total degree the order is
    lexicographic with x_1 leading. Length is binom(d + m, d).
    """
    if d < 1:
        raise ValueError(f"need at least one variable, got d={d}")
    if m < 0:
        raise ValueError(f"degree must be non-negative, got m={m}")
    out = []
    for total in range(m + 1):
        out.extend(_weak_compositions(total, d))
    return out


class Polynomial:
    """Canonical sparse polynomial sum_alpha c_alpha * x^alpha.

    Exactly-zero coefficients are dropped on construction, so the stored term
    count stays within the total-degree basis size and `degree` is the true
    maximal total degree.
    """

    __slots__ = ("n_vars", "terms")

    def __init__(self, n_vars: int, terms=None):
        if n_vars < 1:
            raise ValueError(f"need at least one variable, got n_vars={n_vars}")
        canonical: dict[tuple[int, ...], float] = {}
        for alpha, coef in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n_vars:
                raise DimensionMismatchError(
                    f"exponent vector {alpha} has length {len(alpha)}, expected {n_vars}"
                )
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            coef = float(coef)
            if coef != 0.0:
                canonical[alpha] = canonical.get(alpha, 0.0) + coef
                if canonical[alpha] == 0.0:
                    del canonical[alpha]
        self.n_vars = int(n_vars)
        self.terms = canonical

    @classmethod
    def constant(cls, n_vars: int, value: float) -> "Polynomial":
        return cls(n_vars, {(0,) * n_vars: value})

    @classmethod
    def from_coefficients(cls, coefficients, index_order, n_vars: int) -> "Polynomial":
        """Build from a coefficient vector aligned with `index_order`."""
        return cls(n_vars, dict(zip(index_order, coefficients)))

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(alpha) for alpha in self.terms)

    def coefficient(self, alpha) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def exponent_matrix(self):
        """Return (E, c): exponents as an int array (terms x n_vars) and the
        matching coefficient vector, in a deterministic term order."""
        if not self.terms:
            return (np.zeros((0, self.n_vars), dtype=np.int64), np.zeros(0))
        alphas = sorted(self.terms)
        E = np.array(alphas, dtype=np.int64)
        c = np.array([self.terms[a] for a in alphas])
        return E, c

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at one point (shape (d,)) or a batch (shape (N, d))."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n_vars:
            raise DimensionMismatchError(
                f"points have {pts.shape[1]} coordinates, polynomial has {self.n_vars}"
            )
        out = np.zeros(pts.shape[0])
        if self.terms:
            E, c = self.exponent_matrix()
            max_exp = int(E.max())
            # powers[j][e] = pts[:, j] ** e, built by cumulative multiplication
            powers = []
            for j in range(self.n_vars):
                col = [np.ones(pts.shape[0])]
                for _ in range(max_exp):
                    col.append(col[-1] * pts[:, j])
                powers.append(col)
            for alpha, coef in zip(E, c):
                term = np.full(pts.shape[0], coef)
                for j, e in enumerate(alpha):
                    if e:
                        term = term * powers[j][e]
                out += term
        if np.asarray(points).ndim == 1:
            return float(out[0])
        return out

    __call__ = evaluate

    def __repr__(self):
        return f"Polynomial(n_vars={self.n_vars}, terms={len(self.terms)}, degree={self.degree})"


@lru_cache(maxsize=None)
def _power_expansions(value: int, k: int):
    """Decompositions of (q_1 y_1 + ... + q_k y_k)^value: for every exponent
    vector beta with |beta| = value, the multinomial coefficient and the flat
    per-direction offsets j repeated beta_j times."""
    fact = math.factorial
    out = []
    for beta in _weak_compositions(value, k):
        coef = fact(value)
        offsets = []
        for j, bj in enumerate(beta):
            coef //= fact(bj)
            offsets.extend([j] * bj)
        out.append((beta, float(coef), tuple(offsets)))
    return tuple(out)


class _CompositionPlan:
    """Precomputed expansion of every d-variate monomial x^alpha under
    x = Q y into the k-variate basis: one (row, col, coef, Q-entry indices)
    record per product term. Applying the plan to a concrete Q and a
    coefficient vector is a handful of vectorized array operations."""

    __slots__ = ("d", "k", "m", "alphas", "alpha_index", "gammas",
                 "rows", "cols", "coefs", "qidx")

    def __init__(self, d: int, k: int, m: int):
        self.d, self.k, self.m = d, k, m
        self.alphas = enumerate_total_degree(d, m)
        self.alpha_index = {a: i for i, a in enumerate(self.alphas)}
        self.gammas = enumerate_total_degree(k, m)
        gamma_index = {g: i for i, g in enumerate(self.gammas)}
        sentinel = d * k  # points at the appended 1.0 in the padded Q vector
        rows, cols, coefs, qidx = [], [], [], []
        for a_idx, alpha in enumerate(self.alphas):
            active = [(i, ai) for i, ai in enumerate(alpha) if ai > 0]
            choices = [_power_expansions(ai, k) for _, ai in active]
            for combo in itertools.product(*choices):
                gamma = [0] * k
                coef = 1.0
                offsets = []
                for (i, _), (beta, mult, offs) in zip(active, combo):
                    coef *= mult
                    for j, bj in enumerate(beta):
                        gamma[j] += bj
                    offsets.extend(i * k + j for j in offs)
                rows.append(gamma_index[tuple(gamma)])
                cols.append(a_idx)
                coefs.append(coef)
                qidx.append(offsets + [sentinel] * (m - len(offsets)))
        self.rows = np.array(rows, dtype=np.int64)
        self.cols = np.array(cols, dtype=np.int64)
        self.coefs = np.array(coefs)
        self.qidx = np.array(qidx, dtype=np.int64).reshape(len(rows), m)

    def coefficient_vector(self, poly: Polynomial) -> np.ndarray:
        c = np.zeros(len(self.alphas))
        for alpha, coef in poly.terms.items():
            c[self.alpha_index[alpha]] = coef
        return c

    def apply(self, Q: np.ndarray, cvec: np.ndarray) -> np.ndarray:
        """Coefficient vector of p(Qy) over the k-variate basis."""
        qext = np.append(np.asarray(Q, dtype=float).ravel(), 1.0)
        vals = self.coefs.copy()
        for t in range(self.m):
            vals *= qext[self.qidx[:, t]]
        return np.bincount(self.rows, weights=vals * cvec[self.cols],
                           minlength=len(self.gammas))


@lru_cache(maxsize=None)
def _composition_plan(d: int, k: int, m: int) -> _CompositionPlan:
    return _CompositionPlan(d, k, m)


def compose_polynomial(p: Polynomial, Q) -> Polynomial:
    """Expand y -> p(Qy) for a d x k matrix Q into canonical monomial form.

    The output is a polynomial in k variables of degree <= deg(p). Q does not
    have to be orthonormal; the expansion is defined for any real matrix.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2:
        raise DimensionMismatchError(f"Q must be a matrix, got shape {Q.shape}")
    d, k = Q.shape
    if d != p.n_vars:
        raise DimensionMismatchError(
            f"Q has {d} rows but the polynomial has {p.n_vars} variables"
        )
    if not 1 <= k <= d:
        raise DimensionMismatchError(f"need 1 <= k <= d, got k={k}, d={d}")
    plan = _composition_plan(d, k, max(p.degree, 0))
    coeffs = plan.apply(Q, plan.coefficient_vector(p))
    return Polynomial(k, {g: c for g, c in zip(plan.gammas, coeffs) if c != 0.0})

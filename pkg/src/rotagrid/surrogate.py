"""Total-degree polynomial surrogate fit by unregularized least squares.

The Vandermonde matrix over the graded-lex monomial basis is factorized by
Householder QR; coefficients come from back-substitution. No regularization:
the surrogate only needs to capture the rough low-order variance structure of
the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .datasets import Dataset
from .errors import RankDeficiencyError
from .polynomials import Polynomial, enumerate_total_degree

# Columns whose R diagonal falls below this fraction of the largest one make
# the system rank deficient.
RANK_TOL = 1e-12


@dataclass
class VandermondeSystem:
    """Design matrix A with A[i, j] = t_i ^ alpha_j over the fixed monomial
    order (zero exponent first, so column 0 is all ones)."""

    matrix: np.ndarray
    index_order: list


def build_vandermonde(data: Dataset, m: int) -> VandermondeSystem:
    index_order = enumerate_total_degree(data.dim, m)
    pts = data.points
    # per-variable power tables, then column products
    powers = []
    for j in range(data.dim):
        col = [np.ones(data.n)]
        for _ in range(m):
            col.append(col[-1] * pts[:, j])
        powers.append(col)
    A = np.empty((data.n, len(index_order)))
    for col_idx, alpha in enumerate(index_order):
        col = np.ones(data.n)
        for j, e in enumerate(alpha):
            if e:
                col = col * powers[j][e]
        A[:, col_idx] = col
    return VandermondeSystem(A, index_order)


def fit_polynomial(data: Dataset, m: int) -> Polynomial:
    """Least-squares total-degree-m polynomial through (points, targets).

    Raises RankDeficiencyError when the Vandermonde matrix has (numerically)
    dependent columns, i.e. the data cannot identify all coefficients; use
    more data or a smaller degree."""
    system = build_vandermonde(data, m)
    A = system.matrix
    n_rows, n_cols = A.shape
    if n_rows < n_cols:
        raise RankDeficiencyError(
            f"{n_rows} samples cannot identify {n_cols} coefficients; "
            "use more data or a smaller degree"
        )
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diagonal(R))
    if diag.min() < RANK_TOL * diag.max():
        raise RankDeficiencyError(
            "Vandermonde matrix is rank deficient; use more data or a smaller degree"
        )
    coeffs = solve_triangular(R, Q.T @ data.targets)
    return Polynomial.from_coefficients(coeffs, system.index_order, data.dim)

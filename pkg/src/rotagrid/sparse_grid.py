"""Space- and dimension-adaptive sparse grids on the unit cube.

The basis is the modified hierarchical linear family: on level 1 a single
constant function, on level l >= 2 linearly extrapolating edge functions for
the first and last odd index and plain hats in between, tensorized across
dimensions. A grid is a set of (level vector, odd index vector) keys closed
under hierarchical ancestry, together with one coefficient per key.

Fitting solves the Tikhonov normal equations (B^T B + lambda I) beta = B^T x
with a (Jacobi-preconditioned) conjugate gradient; B is kept as a sparse
matrix, never densely, by exploiting that per data point and per level vector
at most one basis function of the grid is nonzero. Adaptivity alternates
solves with indicator-driven compression and refinement; the refinement mode
is either "standard" (all 2k children of a marked key) or "anova" (children
only in directions the key already resolves, freezing directions the
compression step pruned).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .datasets import Dataset
from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    DomainError,
    DataFormatError,
    GridStateError,
    SaturationError,
)

MODES = ("standard", "anova")


@dataclass(frozen=True, order=True)
class BasisKey:
    """Hierarchical basis identifier: per-direction level l_j >= 1 and odd
    position index 1 <= i_j <= 2^l_j - 1."""

    levels: tuple
    indices: tuple

    @property
    def dim(self) -> int:
        return len(self.levels)


def validate_key(key: BasisKey) -> BasisKey:
    if len(key.levels) != len(key.indices) or not key.levels:
        raise DimensionMismatchError(f"malformed key {key}")
    for l, i in zip(key.levels, key.indices):
        if l < 1 or i < 1 or i > 2 ** l - 1 or i % 2 == 0:
            raise ValueError(f"invalid (level, index) pair ({l}, {i})")
    return key


def root_key(dim: int) -> BasisKey:
    return BasisKey((1,) * dim, (1,) * dim)


def is_root(key: BasisKey) -> bool:
    return all(l == 1 for l in key.levels)


def key_children(key: BasisKey, direction: int):
    """The two children of `key` along one direction: level + 1, indices
    2i - 1 and 2i + 1 (for level 1 -> 2 this gives indices 1 and 3)."""
    levels = list(key.levels)
    levels[direction] += 1
    i = key.indices[direction]
    out = []
    for child_index in (2 * i - 1, 2 * i + 1):
        indices = list(key.indices)
        indices[direction] = child_index
        out.append(BasisKey(tuple(levels), tuple(indices)))
    return tuple(out)


def key_parent(key: BasisKey, direction: int):
    """Parent along one direction, or None when the key sits on level 1."""
    l = key.levels[direction]
    if l <= 1:
        return None
    i = key.indices[direction]
    parent_index = (i + 1) // 2 if ((i + 1) // 2) % 2 == 1 else (i - 1) // 2
    levels = list(key.levels)
    levels[direction] = l - 1
    indices = list(key.indices)
    indices[direction] = max(parent_index, 1)
    return BasisKey(tuple(levels), tuple(indices))


def basis_1d(l: int, i: int, t: float) -> float:
    """One modified hierarchical linear function on [0, 1]."""
    if l < 1 or i < 1 or i > 2 ** l - 1 or i % 2 == 0:
        raise ValueError(f"invalid (level, index) pair ({l}, {i})")
    if l == 1:
        return 1.0
    scale = 2.0 ** l
    if i == 1:
        return max(2.0 - scale * t, 0.0)
    if i == 2 ** l - 1:
        return max(2.0 - scale * (1.0 - t), 0.0)
    return max(1.0 - abs(scale * t - i), 0.0)


def basis_eval(key: BasisKey, t) -> float:
    """Tensor-product basis function at one point."""
    t = np.asarray(t, dtype=float).ravel()
    if len(t) != key.dim:
        raise DimensionMismatchError(
            f"point has {len(t)} coordinates, key has {key.dim}"
        )
    out = 1.0
    for l, i, tj in zip(key.levels, key.indices, t):
        out *= basis_1d(l, i, float(tj))
        if out == 0.0:
            break
    return out


class AdaptiveGrid:
    """Hierarchically closed key set with one coefficient per key.

    Keys are kept sorted so coefficient vectors, serialization, and solver
    behaviour are reproducible. Structural operations (compress/refine) build
    new grids; only the coefficient vector is updated in place by the solver.
    """

    def __init__(self, dim: int, keys, coefficients=None, fitted: bool = False):
        self.dim = int(dim)
        self.keys = sorted(set(keys))
        if not self.keys:
            raise ValueError("grid needs at least the root key")
        self._index = {key: pos for pos, key in enumerate(self.keys)}
        for key in self.keys:
            validate_key(key)
            if key.dim != self.dim:
                raise DimensionMismatchError(f"key {key} has wrong dimension")
        if root_key(self.dim) not in self._index:
            raise ValueError("grid must contain the root key")
        self._check_closure()
        if coefficients is None:
            self.coefficients = np.zeros(len(self.keys))
        else:
            self.coefficients = np.asarray(coefficients, dtype=float).copy()
            if self.coefficients.shape != (len(self.keys),):
                raise DimensionMismatchError("coefficient vector has wrong length")
        self.fitted = bool(fitted)
        self.solve_info = None
        self._groups = None

    def _check_closure(self):
        for key in self.keys:
            for j in range(self.dim):
                parent = key_parent(key, j)
                if parent is not None and parent not in self._index:
                    raise ValueError(
                        f"hierarchical closure violated: {key} lacks parent {parent}"
                    )

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self._index

    def index(self, key: BasisKey) -> int:
        return self._index[key]

    def coefficient_map(self) -> dict:
        return dict(zip(self.keys, self.coefficients))

    def with_keys(self, keys) -> "AdaptiveGrid":
        """New grid over `keys`; coefficients of retained keys carry over
        (they seed the next warm-started solve), new keys start at zero."""
        old = self.coefficient_map()
        grid = AdaptiveGrid(self.dim, keys)
        grid.coefficients = np.array([old.get(key, 0.0) for key in grid.keys])
        return grid

    def level_groups(self):
        """Keys grouped by level vector: {levels: (sorted codes, columns)}
        where a code linearizes the index vector. Cached; the key set of a
        grid never changes after construction."""
        if self._groups is None:
            by_level = {}
            for pos, key in enumerate(self.keys):
                by_level.setdefault(key.levels, []).append((key.indices, pos))
            groups = {}
            for levels, entries in by_level.items():
                strides = _strides(levels)
                coded = sorted(
                    (int(np.dot(strides, indices)), pos) for indices, pos in entries
                )
                codes = np.array([c for c, _ in coded], dtype=np.int64)
                cols = np.array([p for _, p in coded], dtype=np.int64)
                groups[levels] = (codes, cols)
            self._groups = groups
        return self._groups

    def __repr__(self):
        return f"AdaptiveGrid(dim={self.dim}, keys={len(self.keys)}, fitted={self.fitted})"


def _strides(levels):
    strides = np.empty(len(levels), dtype=np.int64)
    acc = 1
    for j, l in enumerate(levels):
        strides[j] = acc
        acc *= 2 ** l
    return strides


def regular_grid(k: int, level: int) -> AdaptiveGrid:
    """Regular sparse grid space: all keys with |l|_1 <= level + k - 1 and
    every admissible odd index; coefficients start at zero."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if level < 1:
        raise ValueError(f"need level >= 1, got {level}")
    keys = []
    for levels in _level_vectors(k, level + k - 1):
        index_ranges = [range(1, 2 ** l, 2) for l in levels]
        keys.extend(
            BasisKey(levels, indices)
            for indices in _product_tuples(index_ranges)
        )
    return AdaptiveGrid(k, keys)


def _level_vectors(k, max_sum):
    def rec(prefix, remaining_dims, budget):
        if remaining_dims == 1:
            for l in range(1, budget + 1):
                yield prefix + (l,)
            return
        for l in range(1, budget - (remaining_dims - 1) + 1):
            yield from rec(prefix + (l,), remaining_dims - 1, budget - l)

    yield from rec((), k, max_sum)


def _product_tuples(ranges):
    import itertools

    return itertools.product(*ranges)


def _candidates_1d(l: int, t: np.ndarray):
    """Per point the only index in I_l whose basis function can be nonzero
    there, together with its value."""
    n = len(t)
    if l == 1:
        return np.ones(n, dtype=np.int64), np.ones(n)
    scale = 2.0 ** l
    idx = (2 * np.floor(2.0 ** (l - 1) * t).astype(np.int64) + 1)
    np.clip(idx, 1, 2 ** l - 1, out=idx)
    x = scale * t
    vals = np.maximum(1.0 - np.abs(x - idx), 0.0)
    left = idx == 1
    if left.any():
        vals[left] = np.maximum(2.0 - x[left], 0.0)
    right = idx == 2 ** l - 1
    if right.any():
        vals[right] = np.maximum(2.0 - (scale - x[right]), 0.0)
    return idx, vals


def _check_unit_cube(points, dim):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionMismatchError(
            f"points of shape {pts.shape} do not match grid dimension {dim}"
        )
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise DomainError("points must lie inside the unit cube [0, 1]^k")
    return pts


def _group_hits(grid: AdaptiveGrid, pts: np.ndarray):
    """Yield (row indices, coefficient columns, basis values) per level group:
    the nonzero entries of the design matrix, one group at a time."""
    n = pts.shape[0]
    for levels, (codes, cols) in grid.level_groups().items():
        strides = _strides(levels)
        cand = np.zeros(n, dtype=np.int64)
        vals = np.ones(n)
        for j, l in enumerate(levels):
            idx_j, vals_j = _candidates_1d(l, pts[:, j])
            cand += strides[j] * idx_j
            vals *= vals_j
        pos = np.searchsorted(codes, cand)
        pos_clipped = np.minimum(pos, len(codes) - 1)
        hit = (codes[pos_clipped] == cand) & (vals != 0.0)
        if hit.any():
            rows = np.nonzero(hit)[0]
            yield rows, cols[pos_clipped[hit]], vals[hit]


class DesignOperator:
    """Matrix products with the N x M design matrix B_{i,(l,j)} = basis value
    at data point i. B is assembled sparsely (per point and level vector at
    most one nonzero), never densely."""

    def __init__(self, grid: AdaptiveGrid, data: Dataset):
        pts = _check_unit_cube(data.points, grid.dim)
        self.grid = grid
        self.shape = (data.n, len(grid))
        rows, cols, vals = [], [], []
        for r, c, v in _group_hits(grid, pts):
            rows.append(r)
            cols.append(c)
            vals.append(v)
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        else:
            rows = np.zeros(0, dtype=np.int64)
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        self._matrix = scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=self.shape
        )

    def matvec(self, v) -> np.ndarray:
        return self._matrix @ np.asarray(v, dtype=float)

    def rmatvec(self, r) -> np.ndarray:
        return self._matrix.T @ np.asarray(r, dtype=float)

    def normal_matvec(self, v, lam: float) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.rmatvec(self.matvec(v)) + lam * v

    def column_sq_sums(self) -> np.ndarray:
        """diag(B^T B), used as the Jacobi preconditioner."""
        squared = self._matrix.multiply(self._matrix)
        return np.asarray(squared.sum(axis=0)).ravel()


def assemble_design(grid: AdaptiveGrid, data: Dataset) -> DesignOperator:
    return DesignOperator(grid, data)


def evaluate_many(grid: AdaptiveGrid, points) -> np.ndarray:
    """Grid function at a batch of points in [0, 1]^k."""
    pts = _check_unit_cube(points, grid.dim)
    out = np.zeros(pts.shape[0])
    beta = grid.coefficients
    for rows, cols, vals in _group_hits(grid, pts):
        np.add.at(out, rows, vals * beta[cols])
    return out


def evaluate(grid: AdaptiveGrid, t) -> float:
    """Grid function at a single point."""
    return float(evaluate_many(grid, np.atleast_2d(np.asarray(t, dtype=float)))[0])


@dataclass(frozen=True)
class FitConfig:
    """Least-squares solve parameters: Tikhonov weight and CG termination."""

    lam: float = 0.0
    cg_reduction: float = 1e-12
    cg_max_iters: int = 10000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 < self.cg_reduction < 1.0:
            raise ValueError(
                f"cg_reduction must lie in (0, 1), got {self.cg_reduction}"
            )
        if self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be positive")


def _pcg(apply_a, b, x0, diag, target, max_iters):
    """Jacobi-preconditioned CG on A x = b. Terminates once the true residual
    norm falls below `target`; returns (x, iterations, residual_norm,
    converged)."""
    x = x0.copy()
    r = b - apply_a(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, 0, rnorm, True
    z = r / diag
    rho = float(r @ z)
    p = z.copy()
    iterations = 0
    for iterations in range(1, max_iters + 1):
        Ap = apply_a(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            break
        alpha = rho / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # recursion drift check: confirm against the true residual
            r = b - apply_a(x)
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                return x, iterations, rnorm, True
            z = r / diag
            rho = float(r @ z)
            p = z.copy()
            continue
        z = r / diag
        rho_new = float(r @ z)
        p = z + (rho_new / rho) * p
        rho = rho_new
    rnorm = np.linalg.norm(b - apply_a(x))
    return x, iterations, rnorm, rnorm <= target


def solve_ls(grid: AdaptiveGrid, data: Dataset, cfg: FitConfig, *,
             design: DesignOperator | None = None) -> np.ndarray:
    """Solve (B^T B + lambda I) beta = B^T x by conjugate gradients.

    The residual target is cg_reduction times the cold-start residual norm
    ||B^T x||, so the solve warm-starts from the grid's current coefficients
    without moving the goalposts. The result is stored in the grid and
    returned. Raises ConvergenceError (with the achieved reduction) when the
    target is not reached within cg_max_iters."""
    if design is None:
        design = DesignOperator(grid, data)
    b = design.rmatvec(data.targets)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        beta = np.zeros(len(grid))
        grid.coefficients = beta
        grid.fitted = True
        grid.solve_info = {"iterations": 0, "reduction": 0.0}
        return beta
    diag = design.column_sq_sums() + cfg.lam
    diag[diag <= 0.0] = 1.0  # empty-support columns never move anyway
    beta, iterations, rnorm, converged = _pcg(
        lambda v: design.normal_matvec(v, cfg.lam),
        b,
        grid.coefficients,
        diag,
        cfg.cg_reduction * bnorm,
        cfg.cg_max_iters,
    )
    if not converged:
        raise ConvergenceError(
            f"CG reached reduction {rnorm / bnorm:.3e} after {iterations} "
            f"iterations (target {cfg.cg_reduction:g})",
            achieved_reduction=rnorm / bnorm,
            iterations=iterations,
        )
    grid.coefficients = beta
    grid.fitted = True
    grid.solve_info = {"iterations": iterations, "reduction": rnorm / bnorm}
    return beta


def error_indicator(grid: AdaptiveGrid, data: Dataset, *,
                    design: DesignOperator | None = None) -> dict:
    """Indicator eps_{l,i} = beta_{l,i} * sum_j basis(t_j) (f(t_j) - x_j)^2;
    keys are ranked by |eps|."""
    if not grid.fitted:
        raise GridStateError("grid has no fitted coefficients")
    if design is None:
        design = DesignOperator(grid, data)
    residual_sq = (design.matvec(grid.coefficients) - data.targets) ** 2
    eps = grid.coefficients * design.rmatvec(residual_sq)
    return dict(zip(grid.keys, eps))


def _ancestor_closure(keys) -> set:
    closed = set()
    stack = list(keys)
    while stack:
        key = stack.pop()
        if key in closed:
            continue
        closed.add(key)
        for j in range(key.dim):
            parent = key_parent(key, j)
            if parent is not None and parent not in closed:
                stack.append(parent)
    return closed


def compress(grid: AdaptiveGrid, threshold: float, data: Dataset, *,
             design: DesignOperator | None = None,
             normalize: bool = False) -> AdaptiveGrid:
    """Drop keys with |eps| below the threshold, except keys that still have
    a surviving descendant (their ancestry must stay in the grid) and the
    root. With normalize=True the indicators are divided by the total squared
    residual, making the threshold scale-free."""
    if design is None:
        design = DesignOperator(grid, data)
    eps = error_indicator(grid, data, design=design)
    cutoff = threshold
    if normalize:
        residual_sq = (design.matvec(grid.coefficients) - data.targets) ** 2
        cutoff = threshold * max(float(residual_sq.sum()), 1e-300)
    unmarked = [key for key, val in eps.items() if abs(val) >= cutoff]
    keep = _ancestor_closure(unmarked)
    keep.add(root_key(grid.dim))
    return grid.with_keys(keep)


def _eligible_directions(grid: AdaptiveGrid, key: BasisKey, mode: str):
    if mode == "standard":
        return range(key.dim)
    if is_root(key):
        # bootstrap only: once the grid holds anything beyond the root, the
        # pruned directions stay frozen
        return range(key.dim) if len(grid) == 1 else ()
    return tuple(j for j in range(key.dim) if key.levels[j] > 1)


def _missing_children(grid: AdaptiveGrid, key: BasisKey, directions):
    missing = []
    for j in directions:
        for child in key_children(key, j):
            if child not in grid:
                missing.append(child)
    return missing


def refine(grid: AdaptiveGrid, count: int, mode: str, data: Dataset, *,
           design: DesignOperator | None = None) -> AdaptiveGrid:
    """Insert the missing children of the `count` refinable keys with the
    largest |eps|. A key is refinable when its mode still has a child to
    insert; inserted keys bring their ancestors along to keep the grid
    closed. Raises SaturationError when nothing is refinable."""
    if mode not in MODES:
        raise ValueError(f"unknown refinement mode {mode!r}; choose from {MODES}")
    if count < 1:
        raise ValueError(f"need count >= 1, got {count}")
    eps = error_indicator(grid, data, design=design)
    refinable = [
        key for key in grid.keys
        if _missing_children(grid, key, _eligible_directions(grid, key, mode))
    ]
    if not refinable:
        raise SaturationError("no basis function in the grid can be refined")
    refinable.sort(key=lambda key: (-abs(eps[key]), key))
    new_keys = set(grid.keys)
    for key in refinable[:count]:
        children = _missing_children(grid, key, _eligible_directions(grid, key, mode))
        new_keys |= _ancestor_closure(children)
    return grid.with_keys(new_keys)


def adaptive_fit(data: Dataset, l0: int, threshold: float, count: int,
                 max_points: int, mode: str, cfg: FitConfig, *,
                 test_data: Dataset | None = None,
                 normalize_indicator: bool = False):
    """Adaptive loop: start from the regular grid of level l0, solve, compress
    once, then alternate solve/refine until the key count exceeds max_points
    or the grid saturates (the refinement that crosses the cap is still
    solved). Returns (grid, trace); one trace row per refinement-loop solve
    with the grid size, training RMSE, and test NRMSE when test data is
    given."""
    if mode not in MODES:
        raise ValueError(f"unknown refinement mode {mode!r}; choose from {MODES}")
    grid = regular_grid(data.dim, l0)
    design = DesignOperator(grid, data)
    solve_ls(grid, data, cfg, design=design)
    grid = compress(grid, threshold, data, design=design,
                    normalize=normalize_indicator)
    trace = []
    iteration = 0
    while True:
        iteration += 1
        design = DesignOperator(grid, data)
        solve_ls(grid, data, cfg, design=design)
        predictions = design.matvec(grid.coefficients)
        row = {
            "iteration": iteration,
            "grid_points": len(grid),
            "train_rmse": float(np.sqrt(np.mean((predictions - data.targets) ** 2))),
        }
        if test_data is not None:
            test_pred = evaluate_many(grid, test_data.points)
            denom = float((test_data.targets ** 2).sum())
            row["test_nrmse"] = float(
                np.sqrt(((test_pred - test_data.targets) ** 2).sum() / denom)
            ) if denom > 0 else float("nan")
        trace.append(row)
        if len(grid) > max_points:
            break
        try:
            grid = refine(grid, count, mode, data, design=design)
        except SaturationError:
            break
    return grid, trace


def grid_to_text(grid: AdaptiveGrid) -> str:
    """Line format: header `k=<dim> keys=<count>`, then one
    `l_1 .. l_k | i_1 .. i_k | beta` line per key."""
    lines = [f"k={grid.dim} keys={len(grid)}"]
    for key, beta in zip(grid.keys, grid.coefficients):
        lines.append(
            " ".join(str(l) for l in key.levels)
            + " | "
            + " ".join(str(i) for i in key.indices)
            + " | "
            + repr(float(beta))
        )
    return "\n".join(lines) + "\n"


def grid_from_text(text: str) -> AdaptiveGrid:
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not lines:
        raise DataFormatError("empty grid serialization")
    header = lines[0].split()
    try:
        dim = int(header[0].removeprefix("k="))
        count = int(header[1].removeprefix("keys="))
    except (IndexError, ValueError):
        raise DataFormatError(f"bad grid header {lines[0]!r}") from None
    if len(lines) - 1 != count:
        raise DataFormatError(
            f"header promises {count} keys, found {len(lines) - 1}"
        )
    keys, coefficients = [], []
    for line in lines[1:]:
        parts = [part.strip() for part in line.split("|")]
        if len(parts) != 3:
            raise DataFormatError(f"bad grid line {line!r}")
        try:
            levels = tuple(int(v) for v in parts[0].split())
            indices = tuple(int(v) for v in parts[1].split())
            beta = float(parts[2])
        except ValueError:
            raise DataFormatError(f"bad grid line {line!r}") from None
        if len(levels) != dim or len(indices) != dim:
            raise DataFormatError(f"bad key dimension on line {line!r}")
        keys.append(BasisKey(levels, indices))
        coefficients.append(beta)
    order = sorted(range(len(keys)), key=lambda pos: keys[pos])
    return AdaptiveGrid(
        dim,
        [keys[pos] for pos in order],
        coefficients=[coefficients[pos] for pos in order],
        fitted=True,
    )

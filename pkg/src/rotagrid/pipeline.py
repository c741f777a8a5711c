"""End-to-end regression pipeline.

Four stages: fit a total-degree polynomial surrogate to the raw data, search
the Stiefel manifold for the frame Q that concentrates the surrogate's
variance on the leading rotated coordinates, push the data through t ->
CDF(Q^T t) onto the unit cube, and fit the adaptive sparse grid there. The
fitted predictor is grid(CDF(Q^T t)). A baseline mode skips the rotation
(Q = identity, k = d) so transformed and untransformed runs can be compared
on the same split. Also here: NRMSE, the text archive for fitted models, and
the multi-split lambda/mode sweep protocol.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .anova import objective
from .datasets import Dataset, train_test_split
from .errors import DataFormatError, DegenerateInputError, DimensionMismatchError
from .polynomials import Polynomial
from .rotation import OptimizerConfig, optimize
from .sparse_grid import (
    AdaptiveGrid,
    FitConfig,
    MODES,
    adaptive_fit,
    evaluate_many,
    grid_from_text,
    grid_to_text,
)
from .surrogate import fit_polynomial

SWEEP_VARIANTS = ("rotated", "baseline")


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one pipeline run; the defaults are the working set for the
    synthetic problems (cubic surrogate, k = min(d, 3), threshold 0.1,
    10 refinements per step, initial level 3, CG reduction 1e-12)."""

    degree: int = 3
    truncation: int | None = None  # None -> min(d, 3)
    initial_level: int = 3
    threshold: float = 0.1
    refine_count: int = 10
    max_points: int = 500
    mode: str = "anova"
    lam: float = 0.0
    cg_reduction: float = 1e-12
    cg_max_iters: int = 10000
    clamp: float = 1e-12
    standardize: bool = False
    normalize_threshold: bool = False
    baseline: bool = False
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"surrogate degree must be >= 1, got {self.degree}")
        if self.mode not in MODES:
            raise ValueError(f"unknown refinement mode {self.mode!r}")
        if not 0.0 < self.clamp < 0.5:
            raise ValueError(f"clamp must lie in (0, 0.5), got {self.clamp}")

    def resolve_truncation(self, d: int) -> int:
        if self.baseline:
            return d
        k = min(d, 3) if self.truncation is None else self.truncation
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= {d}, got truncation {k}")
        return k

    def fit_config(self) -> FitConfig:
        return FitConfig(lam=self.lam, cg_reduction=self.cg_reduction,
                         cg_max_iters=self.cg_max_iters)


def gaussian_cdf(values, clamp: float = 1e-12) -> np.ndarray:
    """Componentwise standard-normal CDF, clipped into [clamp, 1 - clamp] so
    the images stay strictly inside the unit cube."""
    if not 0.0 < clamp < 0.5:
        raise ValueError(f"clamp must lie in (0, 0.5), got {clamp}")
    values = np.asarray(values, dtype=float)
    if not np.isfinite(values).all():
        raise DataFormatError("non-finite input to the CDF rescale")
    return np.clip(ndtr(values), clamp, 1.0 - clamp)


def transform_dataset(data: Dataset, Q, clamp: float = 1e-12) -> Dataset:
    """Replace every point t by CDF(Q^T t); targets are untouched."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != data.dim:
        raise DimensionMismatchError(
            f"frame of shape {Q.shape} does not match data dimension {data.dim}"
        )
    return Dataset(gaussian_cdf(data.points @ Q, clamp), data.targets.copy())


@dataclass
class FittedModel:
    """Fitted predictor t -> grid(CDF(Q^T t)), plus the pieces that built it.

    The surrogate polynomial is kept for diagnostics only and is not part of
    the serialized archive."""

    rotation: np.ndarray
    grid: AdaptiveGrid
    config: PipelineConfig
    objective_value: float
    surrogate: Polynomial | None = None
    feature_means: np.ndarray | None = None
    feature_scales: np.ndarray | None = None

    def predict(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.rotation.shape[0]:
            raise DimensionMismatchError(
                f"points of shape {pts.shape} do not match model input "
                f"dimension {self.rotation.shape[0]}"
            )
        if self.feature_means is not None:
            pts = (pts - self.feature_means) / self.feature_scales
        rotated = gaussian_cdf(pts @ self.rotation, self.config.clamp)
        return evaluate_many(self.grid, rotated)


def nrmse(model: FittedModel, test: Dataset) -> float:
    """Root of (sum of squared prediction errors) / (sum of squared targets)."""
    denom = float((test.targets ** 2).sum())
    if denom <= 0.0:
        raise DegenerateInputError("all-zero test targets; NRMSE is undefined")
    predictions = model.predict(test.points)
    return float(np.sqrt(((predictions - test.targets) ** 2).sum() / denom))


@dataclass
class RunTrace:
    """Per-iteration history of the adaptive fit plus final run metrics."""

    iterations: list
    metrics: dict
    timings_ms: dict


def run_pipeline(train: Dataset, test: Dataset | None, cfg: PipelineConfig):
    """Execute surrogate fit, rotation search, rescale, and adaptive grid fit.

    With cfg.baseline the rotation search is skipped and the identity frame on
    all d coordinates is used, i.e. the adaptive grid runs on the plain
    CDF-rescaled data. Returns (FittedModel, RunTrace); the trace carries one
    row per refinement iteration including the test NRMSE when test data is
    supplied."""
    if test is not None and test.dim != train.dim:
        raise DimensionMismatchError("train and test dimensions differ")
    d = train.dim
    k = cfg.resolve_truncation(d)
    timings = {}

    points = train.points
    means = scales = None
    if cfg.standardize:
        means = points.mean(axis=0)
        scales = points.std(axis=0)
        scales[scales == 0.0] = 1.0
        points = (points - means) / scales
    fit_data = Dataset(points, train.targets)

    start = time.perf_counter()
    surrogate = fit_polynomial(fit_data, cfg.degree)
    timings["surrogate_ms"] = 1e3 * (time.perf_counter() - start)

    start = time.perf_counter()
    if cfg.baseline:
        rotation = np.eye(d)
        objective_value = objective(surrogate, rotation, d)
    else:
        optimizer_cfg = dataclasses.replace(cfg.optimizer, seed=cfg.seed)
        rotation, objective_value = optimize(surrogate, k, optimizer_cfg)
    timings["rotation_ms"] = 1e3 * (time.perf_counter() - start)

    start = time.perf_counter()
    train_t = transform_dataset(fit_data, rotation, cfg.clamp)
    test_t = None
    if test is not None:
        test_points = test.points
        if cfg.standardize:
            test_points = (test_points - means) / scales
        test_t = transform_dataset(Dataset(test_points, test.targets),
                                   rotation, cfg.clamp)
    timings["transform_ms"] = 1e3 * (time.perf_counter() - start)

    start = time.perf_counter()
    grid, iterations = adaptive_fit(
        train_t,
        cfg.initial_level,
        cfg.threshold,
        cfg.refine_count,
        cfg.max_points,
        cfg.mode,
        cfg.fit_config(),
        test_data=test_t,
        normalize_indicator=cfg.normalize_threshold,
    )
    timings["adaptive_fit_ms"] = 1e3 * (time.perf_counter() - start)

    model = FittedModel(
        rotation=rotation,
        grid=grid,
        config=cfg,
        objective_value=objective_value,
        surrogate=surrogate,
        feature_means=means,
        feature_scales=scales,
    )
    metrics = {
        "nrmse": nrmse(model, test) if test is not None else None,
        "grid_points": len(grid),
        "iterations": len(iterations),
        "stage_timings_ms": timings,
        "objective_value": objective_value,
        "q_matrix": rotation.tolist(),
    }
    return model, RunTrace(iterations=iterations, metrics=metrics, timings_ms=timings)


# --- model archive -----------------------------------------------------------

_MODEL_HEADER = "=== rotagrid model v1 ==="
_SECTION_CONFIG = "--- config ---"
_SECTION_ROTATION = "--- rotation ---"
_SECTION_GRID = "--- grid ---"
_SECTION_END = "--- end ---"


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    return out


def config_from_dict(payload: dict) -> PipelineConfig:
    payload = dict(payload)
    optimizer = payload.pop("optimizer", None)
    if optimizer is not None:
        line_search = optimizer.pop("line_search", None)
        from .rotation import LineSearchConfig

        optimizer = OptimizerConfig(
            line_search=LineSearchConfig(**line_search) if line_search else LineSearchConfig(),
            **optimizer,
        )
        payload["optimizer"] = optimizer
    return PipelineConfig(**payload)


def model_to_text(model: FittedModel) -> str:
    """One-file text archive: config JSON, rotation block, grid block."""
    meta = {
        "config": config_to_dict(model.config),
        "objective_value": model.objective_value,
        "feature_means": None if model.feature_means is None else model.feature_means.tolist(),
        "feature_scales": None if model.feature_scales is None else model.feature_scales.tolist(),
    }
    d, k = model.rotation.shape
    rows = [f"{d} {k}"]
    rows.extend(" ".join(repr(float(v)) for v in row) for row in model.rotation)
    parts = [
        _MODEL_HEADER,
        _SECTION_CONFIG,
        json.dumps(meta, indent=2, sort_keys=True),
        _SECTION_ROTATION,
        "\n".join(rows),
        _SECTION_GRID,
        grid_to_text(model.grid).rstrip("\n"),
        _SECTION_END,
    ]
    return "\n".join(parts) + "\n"


def model_from_text(text: str) -> FittedModel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MODEL_HEADER:
        raise DataFormatError("not a rotagrid model archive")
    sections = {}
    current = None
    for line in lines[1:]:
        stripped = line.strip()
        if stripped in (_SECTION_CONFIG, _SECTION_ROTATION, _SECTION_GRID):
            current = stripped
            sections[current] = []
        elif stripped == _SECTION_END:
            current = None
        elif current is not None:
            sections[current].append(line)
    for section in (_SECTION_CONFIG, _SECTION_ROTATION, _SECTION_GRID):
        if section not in sections:
            raise DataFormatError(f"model archive is missing section {section!r}")
    try:
        meta = json.loads("\n".join(sections[_SECTION_CONFIG]))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad config JSON in model archive: {exc}") from None
    rotation_lines = [l for l in sections[_SECTION_ROTATION] if l.strip()]
    try:
        d, k = (int(v) for v in rotation_lines[0].split())
        rotation = np.array(
            [[float(v) for v in line.split()] for line in rotation_lines[1:]]
        )
    except (IndexError, ValueError):
        raise DataFormatError("bad rotation block in model archive") from None
    if rotation.shape != (d, k):
        raise DataFormatError(
            f"rotation block promises {d} x {k}, found shape {rotation.shape}"
        )
    grid = grid_from_text("\n".join(sections[_SECTION_GRID]))
    means = meta.get("feature_means")
    scales = meta.get("feature_scales")
    return FittedModel(
        rotation=rotation,
        grid=grid,
        config=config_from_dict(meta["config"]),
        objective_value=meta.get("objective_value", float("nan")),
        surrogate=None,
        feature_means=None if means is None else np.asarray(means, dtype=float),
        feature_scales=None if scales is None else np.asarray(scales, dtype=float),
    )


def save_model(model: FittedModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_text(model))


def load_model(path) -> FittedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_text(fh.read())


# --- sweep protocol ----------------------------------------------------------


def _sweep_split(args):
    data, cfg, lambdas, modes, variants, seed, split = args
    train, test = train_test_split(data, 0.5, seed=seed + split)
    d = train.dim
    cells = []
    for variant in variants:
        base = dataclasses.replace(
            cfg, baseline=(variant == "baseline"), seed=seed + split
        )
        # the frame depends only on the split, so fit surrogate and rotation
        # once per variant and reuse across (lambda, mode) cells
        surrogate = fit_polynomial(train, base.degree)
        if variant == "baseline":
            rotation = np.eye(d)
            objective_value = objective(surrogate, rotation, d)
        else:
            k = base.resolve_truncation(d)
            rotation, objective_value = optimize(
                surrogate, k, dataclasses.replace(base.optimizer, seed=base.seed)
            )
        train_t = transform_dataset(train, rotation, base.clamp)
        test_t = transform_dataset(test, rotation, base.clamp)
        for mode in modes:
            for lam in lambdas:
                run_cfg = dataclasses.replace(base, mode=mode, lam=lam)
                grid, _ = adaptive_fit(
                    train_t,
                    run_cfg.initial_level,
                    run_cfg.threshold,
                    run_cfg.refine_count,
                    run_cfg.max_points,
                    mode,
                    run_cfg.fit_config(),
                    normalize_indicator=run_cfg.normalize_threshold,
                )
                predictions = evaluate_many(grid, test_t.points)
                denom = float((test_t.targets ** 2).sum())
                cells.append({
                    "split": split,
                    "variant": variant,
                    "mode": mode,
                    "lam": lam,
                    "nrmse": float(np.sqrt(
                        ((predictions - test_t.targets) ** 2).sum() / denom
                    )),
                    "grid_points": len(grid),
                    "objective_value": objective_value,
                })
    return cells


def sweep(data: Dataset, cfg: PipelineConfig, *, splits: int = 20,
          lambdas=(1e-2, 1e-4, 1e-6), modes=MODES,
          variants=SWEEP_VARIANTS, seed: int = 0, workers: int = 1):
    """Averaged-NRMSE protocol: `splits` random 50/50 splits, a full
    (variant, mode, lambda) grid per split, NRMSE aggregated across splits.

    Returns (cells, table): one cell dict per (split, variant, mode, lambda)
    and one table row per (variant, mode, lambda) with mean/std NRMSE and the
    mean grid size. Cells are independent; workers > 1 distributes splits over
    processes without changing the result."""
    if splits < 1:
        raise ValueError(f"need splits >= 1, got {splits}")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown refinement mode {mode!r}")
    for variant in variants:
        if variant not in SWEEP_VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
    jobs = [(data, cfg, tuple(lambdas), tuple(modes), tuple(variants), seed, s)
            for s in range(splits)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_split = list(pool.map(_sweep_split, jobs))
    else:
        per_split = [_sweep_split(job) for job in jobs]
    cells = [cell for chunk in per_split for cell in chunk]
    table = []
    for variant in variants:
        for mode in modes:
            for lam in lambdas:
                group = [c for c in cells
                         if c["variant"] == variant and c["mode"] == mode
                         and c["lam"] == lam]
                values = np.array([c["nrmse"] for c in group])
                table.append({
                    "variant": variant,
                    "mode": mode,
                    "lam": lam,
                    "mean_nrmse": float(values.mean()),
                    "std_nrmse": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
                    "mean_grid_points": float(np.mean([c["grid_points"] for c in group])),
                    "n_splits": len(group),
                })
    return cells, table

"""Pydantic request/response models for the rotagrid service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from .pipeline import PipelineConfig
from .rotation import LineSearchConfig, OptimizerConfig


class DatasetPayload(BaseModel):
    points: list[list[float]]
    targets: list[float]


class OptimizerOptions(BaseModel):
    max_iters: int = 100
    fd_step: float = 1e-6
    grad_tol: float = 1e-8
    restarts: int = 5
    initial_step: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 30
    sufficient_increase: float = 1e-4

    def to_config(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(
            max_iters=self.max_iters,
            fd_step=self.fd_step,
            grad_tol=self.grad_tol,
            restarts=self.restarts,
            line_search=LineSearchConfig(
                initial_step=self.initial_step,
                shrink=self.shrink,
                max_halvings=self.max_halvings,
                sufficient_increase=self.sufficient_increase,
            ),
            seed=seed,
        )


class PipelineOptions(BaseModel):
    degree: int = 3
    truncation: Optional[int] = None
    initial_level: int = 3
    threshold: float = 0.1
    refine_count: int = 10
    max_points: int = 500
    mode: Literal["standard", "anova"] = "anova"
    lam: float = 0.0
    cg_reduction: float = 1e-12
    cg_max_iters: int = 10000
    clamp: float = 1e-12
    standardize: bool = False
    normalize_threshold: bool = False
    baseline: bool = False
    seed: int = 0
    optimizer: OptimizerOptions = Field(default_factory=OptimizerOptions)

    def to_config(self) -> PipelineConfig:
        return PipelineConfig(
            degree=self.degree,
            truncation=self.truncation,
            initial_level=self.initial_level,
            threshold=self.threshold,
            refine_count=self.refine_count,
            max_points=self.max_points,
            mode=self.mode,
            lam=self.lam,
            cg_reduction=self.cg_reduction,
            cg_max_iters=self.cg_max_iters,
            clamp=self.clamp,
            standardize=self.standardize,
            normalize_threshold=self.normalize_threshold,
            baseline=self.baseline,
            seed=self.seed,
            optimizer=self.optimizer.to_config(self.seed),
        )


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    problem: Literal["ridge2d", "ridge5d"]
    n: int = 10000
    noise_var: float = 1e-8
    seed: int = 0


class GenerateResponse(BaseModel):
    train: DatasetPayload
    test: DatasetPayload


class TraceRow(BaseModel):
    iteration: int
    grid_points: int
    train_rmse: float
    test_nrmse: Optional[float] = None


class MetricsPayload(BaseModel):
    nrmse: Optional[float]
    grid_points: int
    iterations: int
    stage_timings_ms: dict[str, float]
    objective_value: float
    q_matrix: list[list[float]]


class FitRequest(BaseModel):
    train: DatasetPayload
    test: Optional[DatasetPayload] = None
    options: PipelineOptions = Field(default_factory=PipelineOptions)


class FitResponse(BaseModel):
    model_id: str
    model: str
    metrics: MetricsPayload
    trace: list[TraceRow]


class EvaluateRequest(BaseModel):
    data: DatasetPayload
    model: Optional[str] = None
    model_id: Optional[str] = None


class EvaluateResponse(BaseModel):
    nrmse: float
    grid_points: int


class ModelListResponse(BaseModel):
    model_ids: list[str]


class SweepRequest(BaseModel):
    data: DatasetPayload
    options: PipelineOptions = Field(default_factory=PipelineOptions)
    splits: int = 20
    lambdas: list[float] = Field(default_factory=lambda: [1e-2, 1e-4, 1e-6])
    modes: list[Literal["standard", "anova"]] = Field(
        default_factory=lambda: ["standard", "anova"]
    )
    variants: list[Literal["rotated", "baseline"]] = Field(
        default_factory=lambda: ["rotated", "baseline"]
    )
    seed: int = 0
    workers: int = 1


class SweepCell(BaseModel):
    split: int
    variant: str
    mode: str
    lam: float
    nrmse: float
    grid_points: int
    objective_value: float


class SweepTableRow(BaseModel):
    variant: str
    mode: str
    lam: float
    mean_nrmse: float
    std_nrmse: float
    mean_grid_points: float
    n_splits: int


class SweepResponse(BaseModel):
    cells: list[SweepCell]
    table: list[SweepTableRow]

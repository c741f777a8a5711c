"""FastAPI service wrapping the pipeline.

Fitted models live in an in-memory registry keyed by id, so one long-running
service can fit once and serve evaluations to many clients; every response
also inlines the model archive text, which keeps the endpoints usable
statelessly.
"""

from __future__ import annotations

import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from . import __version__
from .datasets import Dataset, generate_ridge_2d, generate_ridge_5d
from .errors import RotagridError
from .pipeline import model_from_text, model_to_text, nrmse, run_pipeline, sweep
from .schemas import (
    DatasetPayload,
    EvaluateRequest,
    EvaluateResponse,
    FitRequest,
    FitResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    MetricsPayload,
    ModelListResponse,
    SweepRequest,
    SweepResponse,
)

app = FastAPI(
    title="rotagrid",
    version=__version__,
    description="Rotated-coordinate preprocessing and adaptive sparse-grid "
                "least-squares regression",
)

_registry: dict[str, str] = {}


@app.exception_handler(RotagridError)
async def _domain_error_handler(request: Request, exc: RotagridError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


def _to_dataset(payload: DatasetPayload) -> Dataset:
    return Dataset(np.array(payload.points, dtype=float),
                   np.array(payload.targets, dtype=float))


def _to_payload(data: Dataset) -> DatasetPayload:
    return DatasetPayload(points=data.points.tolist(),
                          targets=data.targets.tolist())


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@app.post("/datasets/generate", response_model=GenerateResponse)
def generate(request: GenerateRequest):
    generator = generate_ridge_2d if request.problem == "ridge2d" else generate_ridge_5d
    train, test = generator(request.n, request.noise_var, request.seed)
    return GenerateResponse(train=_to_payload(train), test=_to_payload(test))


@app.post("/models/fit", response_model=FitResponse)
def fit(request: FitRequest):
    train = _to_dataset(request.train)
    test = _to_dataset(request.test) if request.test is not None else None
    model, trace = run_pipeline(train, test, request.options.to_config())
    text = model_to_text(model)
    model_id = uuid.uuid4().hex
    _registry[model_id] = text
    return FitResponse(
        model_id=model_id,
        model=text,
        metrics=MetricsPayload(**trace.metrics),
        trace=trace.iterations,
    )


@app.get("/models", response_model=ModelListResponse)
def list_models():
    return ModelListResponse(model_ids=sorted(_registry))


@app.get("/models/{model_id}", response_class=PlainTextResponse)
def get_model(model_id: str):
    if model_id not in _registry:
        raise HTTPException(status_code=404, detail=f"no model {model_id!r}")
    return _registry[model_id]


@app.post("/models/evaluate", response_model=EvaluateResponse)
def evaluate_model(request: EvaluateRequest):
    if request.model is not None:
        text = request.model
    elif request.model_id is not None:
        if request.model_id not in _registry:
            raise HTTPException(status_code=404,
                                detail=f"no model {request.model_id!r}")
        text = _registry[request.model_id]
    else:
        raise HTTPException(status_code=422,
                            detail="provide either model or model_id")
    model = model_from_text(text)
    data = _to_dataset(request.data)
    return EvaluateResponse(nrmse=nrmse(model, data),
                            grid_points=len(model.grid))


@app.post("/sweep", response_model=SweepResponse)
def run_sweep(request: SweepRequest):
    cells, table = sweep(
        _to_dataset(request.data),
        request.options.to_config(),
        splits=request.splits,
        lambdas=tuple(request.lambdas),
        modes=tuple(request.modes),
        variants=tuple(request.variants),
        seed=request.seed,
        workers=request.workers,
    )
    return SweepResponse(cells=cells, table=table)

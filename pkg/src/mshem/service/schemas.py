"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

#: either the literal "proportional" or per-bus MW increments
DirectionSpec = Union[Literal["proportional"], dict]


class TracerOptions(BaseModel):
    tol_predict: float = 1e-8
    tol_correct: float = 1e-8
    min_step_mw: float = Field(1.0, gt=0)
    order: int = Field(30, ge=5, le=100)
    max_stages: int = Field(40, ge=1)


class CpfOptions(BaseModel):
    step_size: float = Field(0.006, gt=0)
    min_step: float = Field(1e-4, gt=0)
    tol: float = 1e-8
    parameterization: Literal["local", "arc_length"] = "local"
    max_steps: int = Field(2000, ge=1)


class SolveRequest(BaseModel):
    case_text: str
    method: Literal["newton", "hem"] = "newton"
    lam: float = 0.0
    direction: DirectionSpec = "proportional"
    tol: float = Field(1e-8, gt=0)
    order: int = Field(30, ge=5, le=100)


class BusVoltage(BaseModel):
    bus_id: int
    v_mag_pu: float
    v_ang_rad: float


class SolveResponse(BaseModel):
    converged: bool
    lam: float
    lambda_mw: float
    max_mismatch: float
    max_mismatch_mva: float
    iterations: int
    buses: list[BusVoltage]


class TraceRequest(BaseModel):
    case_text: str
    method: Literal["mshem", "cpf", "both", "hem-single"] = "mshem"
    direction: DirectionSpec = "proportional"
    tracer: TracerOptions = TracerOptions()
    cpf: CpfOptions = CpfOptions()
    samples_per_stage: int = Field(20, ge=1, le=200)


class TracePoint(BaseModel):
    lambda_mw: float
    max_mismatch_mva: float
    v_mag_pu: list[float]
    v_ang_rad: list[float]


class MethodCurve(BaseModel):
    summary: dict
    points: list[TracePoint]


class TraceResponse(BaseModel):
    bus_ids: list[int]
    base_mva: float
    mw_per_lambda: float
    curves: dict[str, MethodCurve]


class CompareRequest(BaseModel):
    case_text: str
    direction: DirectionSpec = "proportional"
    tracer: TracerOptions = TracerOptions()
    cpf: CpfOptions = CpfOptions()
    n_samples: int = Field(20, ge=2, le=200)


class CompareResponse(BaseModel):
    cross_method: dict
    plateau: Optional[dict] = None
    mshem_summary: dict
    cpf_summary: dict


class ErrorBody(BaseModel):
    error_type: str
    message: str
    category: Literal["input", "numerical"]

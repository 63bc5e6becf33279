"""HTTP service exposing the solver, the curve tracers and the comparison.

Cases travel inline as text (MATPOWER subset or the JSON form), so the
service is stateless; every response is fully determined by the request.
Errors are reported as a machine-readable body with a ``category`` of
``input`` (HTTP 400) or ``numerical`` (HTTP 422).
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import artifacts, cpf, tracer
from ..errors import CaseFormatError, CaseSemanticsError, MshemError, OutOfRange
from ..network import AdmittanceMatrix, NetworkCase, build_admittance, parse_case
from ..powerflow import (
    LoadingDirection,
    direction_from_dict,
    flat_start,
    mismatch,
    mw_per_lambda,
    solve_newton,
)
from . import schemas

INPUT_ERRORS = (CaseFormatError, CaseSemanticsError, OutOfRange, ValueError)


def _load(case_text: str) -> tuple[NetworkCase, AdmittanceMatrix]:
    case = parse_case(case_text)
    return case, build_admittance(case)


def _direction(case: NetworkCase, spec) -> LoadingDirection:
    if spec == "proportional":
        return LoadingDirection.proportional(case)
    return direction_from_dict(case, spec)


def _bus_voltages(case: NetworkCase, v: np.ndarray) -> list[schemas.BusVoltage]:
    return [schemas.BusVoltage(bus_id=b.id, v_mag_pu=float(np.abs(v[i])),
                               v_ang_rad=float(np.angle(v[i])))
            for i, b in enumerate(case.buses)]


def _trace_point(case: NetworkCase, mwpl: float, p: tracer.CurvePoint) -> schemas.TracePoint:
    return schemas.TracePoint(
        lambda_mw=float(p.lam * mwpl),
        max_mismatch_mva=float(p.max_mismatch * case.base_mva),
        v_mag_pu=[float(x) for x in np.abs(p.state.v)],
        v_ang_rad=[float(x) for x in np.angle(p.state.v)],
    )


def _tracer_config(opt: schemas.TracerOptions) -> tracer.TracerConfig:
    return tracer.TracerConfig(tol_predict=opt.tol_predict,
                               tol_correct=opt.tol_correct,
                               min_step_mw=opt.min_step_mw,
                               series_order=opt.order,
                               max_stages=opt.max_stages)


def _cpf_config(opt: schemas.CpfOptions) -> cpf.CpfConfig:
    return cpf.CpfConfig(step_size=opt.step_size, min_step=opt.min_step,
                         tol=opt.tol, parameterization=opt.parameterization,
                         max_steps=opt.max_steps)


def run_solve(req: schemas.SolveRequest) -> schemas.SolveResponse:
    case, Y = _load(req.case_text)
    direction = _direction(case, req.direction)
    mwpl = mw_per_lambda(case, direction)
    if req.method == "newton":
        sol = solve_newton(case, Y, flat_start(case), direction, req.lam,
                           tol=req.tol)
        v, mis, iters = sol.state.v, sol.max_mismatch, sol.iterations
        converged = sol.converged
    else:
        pts = tracer.trace_single_hem(case, Y, direction, req.order,
                                      np.array([req.lam]))
        v, mis, iters = pts[0].state.v, pts[0].max_mismatch, 0
        converged = mis <= req.tol
    return schemas.SolveResponse(
        converged=converged, lam=req.lam, lambda_mw=req.lam * mwpl,
        max_mismatch=mis, max_mismatch_mva=mis * case.base_mva,
        iterations=iters, buses=_bus_voltages(case, v))


def _mshem_curve(case, Y, direction, req: schemas.TraceRequest):
    curve = tracer.trace_pv(case, Y, direction, _tracer_config(req.tracer))
    points = tracer.sample_curve(case, Y, direction, curve,
                                 per_stage=req.samples_per_stage,
                                 tol=req.tracer.tol_correct)
    return curve, points


def _hem_single_points(case, Y, direction, req: schemas.TraceRequest):
    """One uncorrected series sampled over the range found by the tracer."""
    curve = tracer.trace_pv(case, Y, direction, _tracer_config(req.tracer))
    lams = np.linspace(0.0, curve.nose_lambda, 41)
    return curve, tracer.trace_single_hem(case, Y, direction,
                                          req.tracer.order, lams)


def run_trace(req: schemas.TraceRequest) -> schemas.TraceResponse:
    case, Y = _load(req.case_text)
    direction = _direction(case, req.direction)
    mwpl = mw_per_lambda(case, direction)
    curves: dict[str, schemas.MethodCurve] = {}

    if req.method in ("mshem", "both"):
        curve, points = _mshem_curve(case, Y, direction, req)
        curves["mshem"] = schemas.MethodCurve(
            summary=artifacts.curve_summary(case, direction, curve, "mshem"),
            points=[_trace_point(case, mwpl, p) for p in points])
    if req.method in ("cpf", "both"):
        curve = cpf.trace_cpf(case, Y, direction, _cpf_config(req.cpf))
        curves["cpf"] = schemas.MethodCurve(
            summary=artifacts.curve_summary(case, direction, curve, "cpf"),
            points=[_trace_point(case, mwpl, p) for p in curve.points])
    if req.method == "hem-single":
        ref, points = _hem_single_points(case, Y, direction, req)
        worst = max(p.max_mismatch for p in points)
        summary = {"method": "hem-single", "converged": True,
                   "nose_lambda": float(ref.nose_lambda),
                   "nose_mw": float(ref.nose_lambda * mwpl),
                   "max_mismatch_mva": float(worst * case.base_mva),
                   "counters": {"series_builds": 1}}
        curves["hem-single"] = schemas.MethodCurve(
            summary=summary,
            points=[_trace_point(case, mwpl, p) for p in points])
    return schemas.TraceResponse(
        bus_ids=[b.id for b in case.buses], base_mva=case.base_mva,
        mw_per_lambda=mwpl, curves=curves)


def run_compare(req: schemas.CompareRequest) -> schemas.CompareResponse:
    case, Y = _load(req.case_text)
    direction = _direction(case, req.direction)
    tcfg = _tracer_config(req.tracer)
    curve_m = tracer.trace_pv(case, Y, direction, tcfg)
    curve_c = cpf.trace_cpf(case, Y, direction, _cpf_config(req.cpf))

    hi = min(curve_m.nose_lambda, curve_c.nose_lambda)
    cands = [p for p in curve_c.points if p.lam <= hi]
    idx = np.linspace(0, len(cands) - 1, req.n_samples).astype(int)
    shared = [cands[i] for i in sorted(set(idx))]
    mpts = tracer.points_at(case, Y, direction, curve_m,
                            [p.lam for p in shared], tol=req.tracer.tol_correct)
    cross = artifacts.compare_points(case, direction, shared, mpts,
                                     tol=req.tracer.tol_correct)

    plateau = None
    if direction.proportional_rate(case) is not None:
        lams = np.linspace(0.95 * curve_m.nose_lambda,
                           0.999 * curve_m.nose_lambda, 12)
        single = tracer.trace_single_hem(case, Y, direction,
                                         req.tracer.order, lams)
        multi = tracer.points_at(case, Y, direction, curve_m, lams,
                                 tol=req.tracer.tol_correct)
        plateau = {
            "sample_lambdas_mw": [float(l * mw_per_lambda(case, direction))
                                  for l in lams],
            "hem_single_max_mismatch_mva": float(
                max(p.max_mismatch for p in single) * case.base_mva),
            "mshem_max_mismatch_mva": float(
                max(p.max_mismatch for p in multi) * case.base_mva),
        }
    return schemas.CompareResponse(
        cross_method=cross, plateau=plateau,
        mshem_summary=artifacts.curve_summary(case, direction, curve_m, "mshem"),
        cpf_summary=artifacts.curve_summary(case, direction, curve_c, "cpf"))


def create_app() -> FastAPI:
    app = FastAPI(title="P-V curve tracing service")

    @app.exception_handler(MshemError)
    async def _mshem_error(request: Request, exc: MshemError):
        category = "input" if isinstance(exc, INPUT_ERRORS) else "numerical"
        body = schemas.ErrorBody(error_type=type(exc).__name__,
                                 message=str(exc), category=category)
        return JSONResponse(status_code=400 if category == "input" else 422,
                            content=body.model_dump())

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        body = schemas.ErrorBody(error_type="RequestValidationError",
                                 message=str(exc.errors()), category="input")
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        body = schemas.ErrorBody(error_type=type(exc).__name__,
                                 message=str(exc), category="input")
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.post("/solve", response_model=schemas.SolveResponse)
    async def solve(req: schemas.SolveRequest):
        return run_solve(req)

    @app.post("/trace", response_model=schemas.TraceResponse)
    async def trace(req: schemas.TraceRequest):
        return run_trace(req)

    @app.post("/compare", response_model=schemas.CompareResponse)
    async def compare(req: schemas.CompareRequest):
        return run_compare(req)

    return app

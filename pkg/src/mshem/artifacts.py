"""Plot-ready data products: curve CSV, mismatch CSV, summaries, comparisons.

All files are deterministic for a fixed input: floats are rendered with
repr-faithful precision (%.17g) and rows follow the input ordering.  Loading
is emitted in megawatts (lambda times the direction's MW-per-lambda scale)
and mismatches in MVA, so the files carry physical units.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable, Sequence

import numpy as np

from .network import NetworkCase
from .powerflow import LoadingDirection, mw_per_lambda
from .tracer import CurvePoint, PVCurve

CURVE_HEADER = ["lambda_mw", "bus_id", "v_mag_pu", "v_ang_rad"]
MISMATCH_HEADER = ["lambda_mw", "method", "max_mismatch_mva"]


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def write_curve_csv(path, case: NetworkCase, direction: LoadingDirection,
                    points: Sequence[CurvePoint],
                    bus_ids: Sequence[int] | None = None) -> None:
    """Per-bus voltage magnitude and angle along the traced curve.

    One row per (point, bus); ``bus_ids`` restricts the emission (e.g. a
    single load-center bus for a two-column P-V plot).
    """
    mwpl = mw_per_lambda(case, direction)
    ids = list(bus_ids) if bus_ids is not None else [b.id for b in case.buses]
    index = case.bus_index()
    rows = []
    for p in points:
        for bid in ids:
            v = p.state.v[index[bid]]
            rows.append([fmt_float(p.lam * mwpl), str(bid),
                         fmt_float(abs(v)), fmt_float(np.angle(v))])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        w.writerows(rows)


def write_mismatch_csv(path, case: NetworkCase, direction: LoadingDirection,
                       labelled_points: Iterable[tuple[str, CurvePoint]]) -> None:
    """Largest power-balance mismatch per emitted point, tagged by method."""
    mwpl = mw_per_lambda(case, direction)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MISMATCH_HEADER)
        for method, p in labelled_points:
            w.writerow([fmt_float(p.lam * mwpl), method,
                        fmt_float(p.max_mismatch * case.base_mva)])


def curve_summary(case: NetworkCase, direction: LoadingDirection,
                  curve: PVCurve, method: str) -> dict:
    mwpl = mw_per_lambda(case, direction)
    out = {
        "method": method,
        "converged": bool(curve.converged),
        "nose_lambda": float(curve.nose_lambda),
        "nose_mw": float(curve.nose_lambda * mwpl),
        "nose_max_mismatch_mva": float(curve.nose.max_mismatch * case.base_mva),
        "counters": {k: int(v) for k, v in curve.counters.items()},
    }
    if curve.stages:
        out["stage_lambdas"] = [float(s.lambda_end) for s in curve.stages]
    return out


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def compare_points(case: NetworkCase, direction: LoadingDirection,
                   a: Sequence[CurvePoint], b: Sequence[CurvePoint],
                   tol: float = 1e-8) -> dict:
    """Voltage and mismatch comparison of two point sets at shared loadings.

    The points of ``b`` are linearly interpolated in lambda onto the
    loadings of ``a`` (restricted to the overlapping range); the report
    gives per-sample |V| deltas and flags points of ``a`` whose recorded
    mismatch exceeds ``tol``.
    """
    lam_b = np.array([p.lam for p in b])
    vb = np.array([np.abs(p.state.v) for p in b])
    lo, hi = max(a[0].lam, lam_b.min()), min(a[-1].lam, lam_b.max())
    mwpl = mw_per_lambda(case, direction)
    samples = []
    flagged = []
    worst = 0.0
    for p in a:
        if not lo <= p.lam <= hi:
            continue
        interp = np.array([np.interp(p.lam, lam_b, vb[:, i])
                           for i in range(case.n_bus)])
        delta = float(np.max(np.abs(np.abs(p.state.v) - interp)))
        worst = max(worst, delta)
        samples.append({
            "lambda_mw": float(p.lam * mwpl),
            "max_v_delta_pu": delta,
            "max_mismatch_mva": float(p.max_mismatch * case.base_mva),
        })
        if p.max_mismatch > tol:
            flagged.append(float(p.lam * mwpl))
    return {
        "n_samples": len(samples),
        "max_v_delta_pu": worst,
        "tolerance": tol,
        "points_exceeding_tolerance": flagged,
        "samples": samples,
    }

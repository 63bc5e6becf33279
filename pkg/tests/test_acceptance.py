"""Acceptance gate: the seven headline guarantees, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import csv
import json
import time

import numpy as np

from mshem.cases import load_case_text
from mshem.cli import main
from mshem.hee import build_hee_series, hee_correct
from mshem.hem import physical_germ
from mshem.powerflow import (
    StateVector,
    factorize,
    flat_start,
    jacobian,
    mismatch,
    mw_per_lambda,
    residual_vector,
    solve_newton,
)
from mshem.series import conjugate_reflect, convolve, eval_series, pade_eval, pade_from_series, reciprocal
from mshem.tracer import TracerConfig, curve_query, points_at, trace_pv, trace_single_hem


def _verdict(num: int, name: str, ok: bool) -> None:
    print(f"\nACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"acceptance criterion {num} ({name}) failed"


def test_criterion_1_tolerance_reproduction(tmp_path):
    case_path = tmp_path / "case39.m"
    case_path.write_text(load_case_text("case39.m"))
    out = tmp_path / "out"
    t0 = time.perf_counter()
    code = main(["trace", "--case", str(case_path), "--method", "mshem",
                 "--out", str(out)])
    elapsed = time.perf_counter() - t0
    with open(out / "mismatch.csv") as fh:
        rows = list(csv.DictReader(fh))
    worst_pu = max(float(r["max_mismatch_mva"]) for r in rows) / 100.0
    ok = code == 0 and rows and worst_pu <= 1e-8 and elapsed <= 10.0
    print(f"\n  [{len(rows)} points, worst mismatch {worst_pu:.2e} p.u., "
          f"{elapsed:.2f} s]")
    _verdict(1, "every traced point within 1e-8 in <= 10 s", ok)


def test_criterion_2_stage_count_dominance(curve39, cpf39):
    stages = len(curve39.stages)
    steps = cpf39.counters["cpf_steps"]
    ok = stages <= 10 and stages <= steps / 10.0
    print(f"\n  [mshem stages {stages}, cpf steps {steps}]")
    _verdict(2, "stage count <= 10 and <= cpf_steps/10", ok)


def test_criterion_3_precision_plateau(case39, y39, dir39, curve39):
    lams = np.linspace(0.955 * curve39.nose_lambda,
                       0.999 * curve39.nose_lambda, 12)
    single = trace_single_hem(case39, y39, dir39, 30, lams)
    multi = points_at(case39, y39, dir39, curve39, lams)
    worst_single = max(p.max_mismatch for p in single)
    worst_multi = max(p.max_mismatch for p in multi)
    ok = worst_single > 1e-6 and worst_multi <= 1e-8
    print(f"\n  [single-stage worst {worst_single:.2e}, "
          f"multi-stage worst {worst_multi:.2e}]")
    _verdict(3, "single-stage plateau vs multi-stage 1e-8", ok)


def test_criterion_4_analytic_two_bus(case2, curve2):
    p_nose = 1.0 + curve2.nose_lambda
    v_nose = abs(curve2.nose.state.v[case2.bus_index()[2]])
    p_err = abs(p_nose - 5.0)
    v_err = abs(v_nose - 1.0 / np.sqrt(2.0))
    ok = p_err <= 0.01 and v_err <= 5e-3
    print(f"\n  [P_nose {p_nose:.5f} (err {p_err:.1e}), "
          f"V_nose {v_nose:.5f} (err {v_err:.1e})]")
    _verdict(4, "2-bus nose at 5.0 p.u. and V at 1/sqrt(2)", ok)


def test_criterion_5_hee_unit_contract(case39, y39, dir39):
    exact = solve_newton(case39, y39, flat_start(case39), dir39, 0.0,
                         tol=1e-13)
    rng = np.random.default_rng(7)
    v = exact.state.v + 1e-3 * (rng.standard_normal(39)
                                + 1j * rng.standard_normal(39))
    v[case39.slack_index()] = exact.state.v[case39.slack_index()]
    q = exact.state.q_gen + 1e-3 * rng.standard_normal(9)
    bad = StateVector(v=v, q_gen=q)

    res = hee_correct(case39, y39, bad, dir39, 0.0, order=20, tol=1e-10)
    series, nfact, _ = build_hee_series(case39, y39, bad, dir39, 0.0, 20)
    eps = residual_vector(case39, y39, bad, dir39, 0.0)
    newton = -factorize(jacobian(case39, y39, bad)).solve(eps)
    ns = [i for i in range(39) if i != case39.slack_index()]
    order1 = np.concatenate([series.v_coeffs[1, ns].real,
                             series.v_coeffs[1, ns].imag,
                             series.q_coeffs[1]])
    rel = np.max(np.abs(order1 - newton)) / np.max(np.abs(newton))
    ok = (res.solution.max_mismatch <= 1e-10 and res.factorizations == 1
          and nfact == 1 and rel <= 1e-10)
    print(f"\n  [restored to {res.solution.max_mismatch:.2e}, "
          f"{res.factorizations} factorization, order-1 vs Newton rel {rel:.1e}]")
    _verdict(5, "HEE restores 1e-10 with one factorization", ok)


def test_criterion_6_cross_method_equivalence(case39, y39, dir39, curve39,
                                              cpf39):
    hi = min(curve39.nose_lambda, cpf39.nose_lambda)
    cands = [p for p in cpf39.points if p.lam <= hi]
    idx = np.linspace(0, len(cands) - 1, 20).astype(int)
    shared = [cands[i] for i in sorted(set(idx))]
    mpts = points_at(case39, y39, dir39, curve39, [p.lam for p in shared])
    dv = max(float(np.max(np.abs(np.abs(a.state.v) - np.abs(b.state.v))))
             for a, b in zip(shared, mpts))

    lams = np.linspace(0.05, 0.65, 10) * curve39.nose_lambda
    worst_hem = 0.0
    for lam in lams:
        p = trace_single_hem(case39, y39, dir39, 30, np.array([lam]))[0]
        ref = solve_newton(case39, y39, flat_start(case39), dir39, float(lam),
                           tol=1e-12)
        worst_hem = max(worst_hem,
                        float(np.max(np.abs(p.state.v - ref.state.v))))
    ok = dv <= 1e-6 and worst_hem <= 1e-8
    print(f"\n  [cpf/mshem |V| delta {dv:.2e} at {len(shared)} samples, "
          f"hem-vs-newton {worst_hem:.2e} at 10 loadings]")
    _verdict(6, "CPF/MSHEM within 1e-6 and HEM/Newton within 1e-8", ok)


def test_criterion_7_property_suites(case39, y39, dir39, curve39, rng):
    t0 = time.perf_counter()

    # series and Pade identities
    num = np.array([1.0, -0.4, 0.25], dtype=complex)
    den = np.array([1.0, 0.6, -0.1], dtype=complex)
    series = convolve(num, reciprocal(den, 12), 12)
    p = pade_from_series(series)
    sgrid = rng.uniform(-0.7, 0.7, 25)
    pade_ok = all(abs(pade_eval(p, s)
                      - eval_series(num, s) / eval_series(den, s)) < 1e-9
                  for s in sgrid)
    recip_ok = np.allclose(convolve(den, reciprocal(den, 12), 12),
                           np.eye(13, 1).ravel(), atol=1e-12)
    conj_ok = all(abs(eval_series(conjugate_reflect(series), s)
                      - np.conj(eval_series(series, s))) < 1e-12
                  for s in sgrid)

    # germ invariant: zero injections at every non-slack bus
    germ = physical_germ(case39, y39)
    s_inj = germ.state.v * np.conj(y39.matrix @ germ.state.v)
    ns = [i for i in range(39) if i != case39.slack_index()]
    resid = s_inj[ns].copy()
    pv = case39.pv_indices()
    resid[np.searchsorted(ns, pv)] -= 1j * germ.state.q_gen
    germ_ok = float(np.max(np.abs(resid))) <= 1e-12

    # Jacobian vs central finite differences
    from mshem.powerflow import apply_update

    x = solve_newton(case39, y39, flat_start(case39), dir39, 0.3).state
    J = jacobian(case39, y39, x).toarray()
    h = 1e-6
    fd_ok = True
    for j in rng.choice(J.shape[1], size=12, replace=False):
        dx = np.zeros(J.shape[1])
        dx[j] = h
        col = (residual_vector(case39, y39, apply_update(case39, x, -dx), dir39, 0.3)
               - residual_vector(case39, y39, apply_update(case39, x, dx), dir39, 0.3)) / (2 * h)
        fd_ok = fd_ok and np.max(np.abs(J[:, j] - col)) < 1e-6

    # curve_query continuity at stage boundaries
    cont_ok = all(
        np.max(np.abs(curve_query(curve39, st.lambda_end - 1e-12).v
                      - curve_query(curve39, st.lambda_end + 1e-12).v)) <= 1e-8
        for st in curve39.stages[:-1])

    # determinism: bit-identical rerun
    again = trace_pv(case39, y39, dir39, TracerConfig())
    det_ok = (again.nose_lambda == curve39.nose_lambda
              and np.array_equal(again.nose.state.v, curve39.nose.state.v))

    elapsed = time.perf_counter() - t0
    ok = (pade_ok and recip_ok and conj_ok and germ_ok and fd_ok and cont_ok
          and det_ok and elapsed < 60.0)
    print(f"\n  [pade {pade_ok}, reciprocal {recip_ok}, conjugate {conj_ok}, "
          f"germ {germ_ok}, jacobian-fd {fd_ok}, continuity {cont_ok}, "
          f"determinism {det_ok}, {elapsed:.1f} s]")
    _verdict(7, "property suites green in < 60 s", ok)

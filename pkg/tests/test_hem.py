import numpy as np
import pytest

from mshem import hem
from mshem.errors import SingularEmbeddingMatrix
from mshem.hem import build_series, evaluate, linear_germ, physical_germ
from mshem.powerflow import flat_start, mismatch, solve_newton


def test_physical_germ_zero_injection(case39, y39):
    germ = physical_germ(case39, y39)
    assert germ.physical
    # at the germ every non-slack injection vanishes and PV magnitudes hold
    v = germ.state.v
    s_inj = v * np.conj(y39.matrix @ v)
    ns = [i for i in range(case39.n_bus) if i != case39.slack_index()]
    pv = case39.pv_indices()
    resid = s_inj[ns] + 0j
    resid[np.searchsorted(ns, pv)] -= 1j * germ.state.q_gen
    assert np.max(np.abs(resid)) < 1e-12
    vset = np.array([case39.buses[i].v_set for i in pv])
    assert np.max(np.abs(np.abs(v[pv]) - vset)) < 1e-12


def test_order_zero_is_germ(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 12,
                       horizon=1.0)
    assert np.allclose(ser.v_coeffs[0], germ.state.v)
    assert np.allclose(ser.q_coeffs[0], germ.state.q_gen)


def test_per_order_residuals_small(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 30,
                       horizon=1.0)
    assert max(ser.order_residuals) < 1e-12


def test_physical_germ_property_on_s_grid(case39, y39, dir39):
    # every real s on the series maps to an actual operating point at the
    # s-scaled loading, not only s=1
    germ = physical_germ(case39, y39)
    ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 30,
                       horizon=1.0)
    s0 = ser.s_of_lambda(0.0)
    for s in np.linspace(s0, ser.s_of_lambda(0.5), 7):
        state = evaluate(ser, float(s), "pade")
        lam = ser.lambda_of_s(float(s))
        assert mismatch(case39, y39, state, dir39, lam).max_abs < 1e-8


def test_hem_matches_newton_at_base(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 30,
                       horizon=1.0)
    state = evaluate(ser, ser.s_of_lambda(0.0), "pade")
    ref = solve_newton(case39, y39, flat_start(case39), dir39, 0.0, tol=1e-12)
    assert np.max(np.abs(state.v - ref.state.v)) < 1e-8


def test_m4_restart_matches_m3(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    m3 = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 30,
                      horizon=1.0)
    anchor = evaluate(m3, m3.s_of_lambda(0.3), "pade")
    m4 = build_series(case39, y39, hem.M4, anchor, 0.3, dir39, 30,
                      horizon=0.2)
    lam = 0.42
    a = evaluate(m3, m3.s_of_lambda(lam), "pade")
    b = evaluate(m4, m4.s_of_lambda(lam), "pade")
    assert np.max(np.abs(a.v - b.v)) < 1e-8


def test_convergence_in_order(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    ref = solve_newton(case39, y39, flat_start(case39), dir39, 0.6,
                       tol=1e-12)
    errs = []
    for order in (10, 20, 30):
        ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, order,
                           horizon=1.0)
        state = evaluate(ser, ser.s_of_lambda(0.6), "pade")
        errs.append(np.max(np.abs(state.v - ref.state.v)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-9


def test_m1_linear_germ_pq_only(case2, y2, dir2):
    germ = linear_germ(case2, y2)
    assert not germ.physical
    ser = build_series(case2, y2, hem.M1, germ.state, 0.0, dir2, 30,
                       horizon=0.0)
    # only s=1 lies on the curve for the non-physical germ
    state = evaluate(ser, 1.0, "pade")
    assert mismatch(case2, y2, state, dir2, 0.0).max_abs < 1e-10


def test_m1_rejects_pv_buses(case39, y39):
    with pytest.raises(SingularEmbeddingMatrix):
        linear_germ(case39, y39)


def test_lambda_maps_are_inverse(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    for variant, horizon in ((hem.M3, 1.0), (hem.M4, 0.25)):
        ser = build_series(case39, y39, variant, germ.state, 0.0, dir39, 8,
                           horizon=horizon)
        for lam in (0.0, 0.1, 0.2):
            assert ser.lambda_of_s(ser.s_of_lambda(lam)) == pytest.approx(lam)


def test_direct_vs_pade_evaluation(case39, y39, dir39):
    germ = physical_germ(case39, y39)
    ser = build_series(case39, y39, hem.M3, germ.state, 0.0, dir39, 30,
                       horizon=1.0)
    s = ser.s_of_lambda(0.2)
    a = evaluate(ser, s, "direct")
    b = evaluate(ser, s, "pade")
    assert np.max(np.abs(a.v - b.v)) < 1e-9

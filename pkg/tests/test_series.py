import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mshem.errors import DegeneratePade, PoleAtEvaluationPoint, ZeroLeadingCoefficient
from mshem.series import (
    PadeApproximant,
    conjugate_reflect,
    convolve,
    eval_series,
    pade_build,
    pade_eval,
    pade_from_series,
    reciprocal,
)

finite = st.floats(min_value=-10, max_value=10, allow_nan=False)
coeffs = st.lists(finite, min_size=1, max_size=8).map(
    lambda xs: np.array(xs, dtype=complex))


@given(coeffs, coeffs)
@settings(max_examples=50, deadline=None)
def test_convolve_matches_polynomial_product(a, b):
    order = len(a) + len(b) - 2
    ref = np.zeros(order + 1, dtype=complex)
    for i, ca in enumerate(a):
        for j, cb in enumerate(b):
            ref[i + j] += ca * cb
    got = convolve(a, b, order)
    assert got.shape == ref.shape
    assert np.allclose(got, ref, atol=1e-12)


@given(coeffs, st.floats(min_value=-0.5, max_value=0.5))
@settings(max_examples=50, deadline=None)
def test_eval_series_is_horner(a, s):
    expected = sum(c * s**k for k, c in enumerate(a))
    assert eval_series(a, s) == pytest.approx(expected, abs=1e-9)


@given(coeffs)
@settings(max_examples=50, deadline=None)
def test_reciprocal_identity(a):
    if abs(a[0]) < 1e-3:
        a = a.copy()
        a[0] = 1.0
    order = 10
    w = reciprocal(a, order)
    prod = convolve(a, w, order)
    unit = np.zeros(order + 1, dtype=complex)
    unit[0] = 1.0
    # cancellation scales with the size of the reciprocal coefficients
    scale = max(1.0, float(np.max(np.abs(w))) * float(np.max(np.abs(a))))
    assert np.allclose(prod, unit, atol=1e-10 * scale)


def test_reciprocal_zero_leading_coefficient():
    with pytest.raises(ZeroLeadingCoefficient):
        reciprocal(np.array([0.0, 1.0], dtype=complex), 5)


@given(coeffs, st.floats(min_value=-2, max_value=2))
@settings(max_examples=50, deadline=None)
def test_conjugate_reflect_property(a, s):
    # coefficient-wise conjugation evaluates to conj(a(s)) for real s
    lhs = eval_series(conjugate_reflect(a), s)
    rhs = np.conj(eval_series(a, s))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_pade_rational_round_trip(rng):
    # a [2/2] rational is reproduced exactly from its series expansion
    num = np.array([1.0, 0.3, -0.2], dtype=complex)
    den = np.array([1.0, -0.5, 0.1], dtype=complex)
    series = convolve(num, reciprocal(den, 12), 12)
    p = pade_build(series, 2)
    for s in rng.uniform(-0.8, 0.8, size=10):
        exact = eval_series(num, s) / eval_series(den, s)
        assert pade_eval(p, s) == pytest.approx(exact, abs=1e-10)


def test_pade_prefers_diagonal():
    series = convolve(np.array([1.0, 0.3, -0.2], dtype=complex),
                      reciprocal(np.array([1.0, -0.5, 0.1], dtype=complex), 12),
                      12)
    p = pade_build(series, 2)
    assert p.order == (2, 2)


def test_pade_exp_frozen_value():
    # exp(s) through s^6 gives the exact [3/3] value 193/71 at s=1; the
    # approximation error there is 2.80e-5 (frozen oracle)
    a = np.array([1.0 / math.factorial(k) for k in range(7)], dtype=complex)
    p = pade_build(a, 3)
    val = pade_eval(p, 1.0)
    assert val.real == pytest.approx(193.0 / 71.0, abs=1e-12)
    err = abs(val - math.e)
    assert 2.7e-5 < err < 2.9e-5


def test_pade_accelerates_geometric_series():
    # 1/(1-s): eleven terms, exact as a [m/1] rational even outside the
    # disc of convergence of the series itself
    a = np.ones(11, dtype=complex)
    p = pade_from_series(a)
    assert pade_eval(p, 0.5) == pytest.approx(2.0, abs=1e-12)
    assert pade_eval(p, 0.9) == pytest.approx(10.0, abs=1e-9)


def test_pade_pole_detection():
    p = PadeApproximant(num=np.array([1.0 + 0j]),
                        den=np.array([1.0 + 0j, -1.0 + 0j]))
    with pytest.raises(PoleAtEvaluationPoint):
        pade_eval(p, 1.0)


def test_pade_degenerate_reduces_order():
    # a pure polynomial has a degenerate denominator block; the builder
    # must fall back to a lower order rather than fail
    a = np.array([2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], dtype=complex)
    p = pade_build(a, 3)
    assert pade_eval(p, 0.7) == pytest.approx(2.7, abs=1e-10)


def test_pade_invalid_order():
    with pytest.raises(ValueError):
        pade_build(np.ones(5, dtype=complex), -1)


def test_pade_zero_series():
    # the all-zero series degenerates down to the zero [0/0] approximant
    p = pade_build(np.zeros(5, dtype=complex), 2)
    assert pade_eval(p, 0.3) == 0.0

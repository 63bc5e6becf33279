"""Holomorphic error embedding: non-iterative correction of an inaccurate solution.

Given an approximate power-flow state x_l with residual eps = f(x_l), embed

    g(s) = f(x(s)) - (1 - s) * eps,      x(s) = x_l + sum_k x_k s^k.

Order 0 holds identically; equating s^1 gives J(x_l) x_1 = -eps (exactly the
Newton step); every higher order reuses the same factorized Jacobian with a
right-hand side made of convolutions of lower-order coefficients, because f
is an exact quadratic in rectangular coordinates.  Evaluating x(s) at s=1
yields the corrected solution without any iteration: one factorization, N
back-substitutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import series as se
from .errors import CorrectionDiverged
from .network import AdmittanceMatrix, NetworkCase
from .powerflow import (
    LoadingDirection,
    MismatchVector,
    PowerFlowSolution,
    StateVector,
    factorize,
    jacobian,
    mismatch,
    nonslack_indices,
    residual_vector,
)

PADE_MIN_ORDER = 8


@dataclass
class HeeSeries:
    """Correction series around an inaccurate anchor state."""

    order: int
    v_coeffs: np.ndarray   # (order+1, n_bus) complex; slack column constant
    q_coeffs: np.ndarray   # (order+1, n_pv) real
    anchor: StateVector
    order_residuals: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class HeeResult:
    solution: PowerFlowSolution
    series: HeeSeries
    anchor_mismatch: float
    factorizations: int
    back_substitutions: int


def build_hee_series(case: NetworkCase, Y: AdmittanceMatrix, x_l: StateVector,
                     direction: LoadingDirection, lam: float,
                     order: int) -> tuple[HeeSeries, int, int]:
    """Compute the correction series; returns (series, n_factorizations, n_solves)."""
    n = case.n_bus
    ns = nonslack_indices(case)
    pv = case.pv_indices()
    nns, npv = len(ns), len(pv)

    eps = residual_vector(case, Y, x_l, direction, lam)
    jac = jacobian(case, Y, x_l)
    lu = factorize(jac)

    V = np.zeros((order + 1, n), dtype=complex)
    Q = np.zeros((order + 1, npv))
    V[0] = x_l.v
    Q[0] = x_l.q_gen
    Icoef = np.zeros((order + 1, n), dtype=complex)  # I(s) = Y x(s)
    Icoef[0] = Y.matrix @ V[0]
    residuals = [0.0]  # order 0 holds identically: g(0) = f(x_l) - eps = 0
    solves = 0

    for k in range(1, order + 1):
        if k == 1:
            rhs = -eps
        else:
            cross = np.zeros(n, dtype=complex)
            for m in range(1, k):
                cross += V[m] * np.conj(Icoef[k - m])
            mag = np.zeros(npv, dtype=complex)
            for m in range(1, k):
                mag += V[m, pv] * np.conj(V[k - m, pv])
            rhs = -np.concatenate([cross[ns].real, cross[ns].imag, mag.real])
        x = lu.solve(rhs)
        solves += 1
        V[k, ns] = x[:nns] + 1j * x[nns:2 * nns]
        Q[k] = x[2 * nns:]
        Icoef[k] = Y.matrix @ V[k]
        residuals.append(float(np.max(np.abs(jac @ x - rhs))))
    series = HeeSeries(order=order, v_coeffs=V, q_coeffs=Q, anchor=x_l,
                       order_residuals=residuals)
    return series, 1, solves


def hee_residual_check(case: NetworkCase, Y: AdmittanceMatrix,
                       series: HeeSeries, direction: LoadingDirection,
                       lam: float, k: int) -> float:
    """Infinity norm of the order-k coefficient equation g_k = 0.

    Recomputed from scratch (full convolution through order k), independent
    of the linear-solver residuals stored during the build.
    """
    if k < 0 or k > series.order:
        raise ValueError(f"order {k} outside 0..{series.order}")
    n = case.n_bus
    ns = nonslack_indices(case)
    pv = case.pv_indices()
    V, Q = series.v_coeffs, series.q_coeffs
    Icoef = np.array([Y.matrix @ V[m] for m in range(k + 1)])
    conv = np.zeros(n, dtype=complex)
    for m in range(k + 1):
        conv += V[m] * np.conj(Icoef[k - m])
    mag = np.zeros(len(pv), dtype=complex)
    for m in range(k + 1):
        mag += V[m, pv] * np.conj(V[k - m, pv])
    # f_k = conv_k - (specified injection)_k; the specified part is constant
    # in s except for the PV reactive series (+j q_k) and, at order 0, the
    # full S_spec / v_set^2 targets.  (1-s)*eps contributes -eps at 0, +eps at 1.
    eps = residual_vector(case, Y, series.anchor, direction, lam)
    if k == 0:
        # g_0 = f(x_l) - eps, both sides evaluated through the same residual path
        return float(np.max(np.abs(residual_vector(case, Y, series.anchor,
                                                   direction, lam) - eps)))
    conv[pv] -= 1j * Q[k]
    gk = np.concatenate([conv[ns].real, conv[ns].imag, mag.real])
    if k == 1:
        gk += eps
    return float(np.max(np.abs(gk)))


def hee_correct(case: NetworkCase, Y: AdmittanceMatrix, x_l: StateVector,
                direction: LoadingDirection, lam: float, order: int = 20,
                tol: float = 1e-8) -> HeeResult:
    """Correct x_l toward the exact solution at loading lam, without iteration.

    Raises CorrectionDiverged when the s=1 evaluation fails to beat the
    anchor mismatch by at least a factor of 10 (and is still above tol) --
    the signal for the caller to shrink its predictor step.
    """
    mis0 = mismatch(case, Y, x_l, direction, lam).max_abs
    series, nfact, nsolve = build_hee_series(case, Y, x_l, direction, lam, order)

    if order >= PADE_MIN_ORDER:
        v1 = np.array([se.pade_eval(se.pade_from_series(series.v_coeffs[:, i]), 1.0)
                       for i in range(case.n_bus)])
        q1 = np.array([se.pade_eval(se.pade_from_series(series.q_coeffs[:, i].astype(complex)), 1.0).real
                       for i in range(series.q_coeffs.shape[1])])
    else:
        v1 = np.asarray(se.eval_series(series.v_coeffs, 1.0))
        q1 = np.asarray(se.eval_series(series.q_coeffs.astype(complex), 1.0)).real
    corrected = StateVector(v=v1, q_gen=q1)
    mis1 = mismatch(case, Y, corrected, direction, lam).max_abs

    if mis1 > tol and mis1 > mis0 / 10.0:
        raise CorrectionDiverged(
            f"correction left mismatch at {mis1:.3e} (anchor {mis0:.3e})"
        )
    sol = PowerFlowSolution(state=corrected, lam=lam, max_mismatch=mis1,
                            converged=mis1 <= tol, iterations=0)
    return HeeResult(solution=sol, series=series, anchor_mismatch=mis0,
                     factorizations=nfact, back_substitutions=nsolve)

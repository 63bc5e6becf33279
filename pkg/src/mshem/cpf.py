"""Classical continuation power flow: the iterative benchmark method.

Predictor-corrector continuation on the augmented system f(x, lambda) = 0
with one extra parameterization row.  The predictor is the linear tangent of
the solution branch; the corrector is a full Newton iteration on the
augmented system.  Away from the nose the continuation parameter is lambda
itself; near the nose the tangent is dominated by a voltage component and
the parameterization switches to it (local parameterization), which keeps
the augmented Jacobian nonsingular while the branch turns.

The trace stops on the upper branch: a corrected point with decreasing
lambda means the nose has been rounded, so the step is rejected and halved
until it falls below the floor.  The nose is the accepted point of maximum
lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    BaseCaseUnsolvable,
    NonConvergence,
    SingularJacobian,
    StallBeforeNose,
)
from .network import AdmittanceMatrix, NetworkCase
from .powerflow import (
    NEWTON_MAX_ITER,
    LoadingDirection,
    PowerFlowSolution,
    StateVector,
    factorize,
    flat_start,
    gen_p_per_bus,
    jacobian,
    mismatch,
    nonslack_indices,
    residual_vector,
    solve_newton,
)
from .tracer import CurvePoint, PVCurve


@dataclass(frozen=True)
class CpfConfig:
    step_size: float = 0.006       # continuation-parameter step
    min_step: float = 1e-4         # cut floor; also the nose resolution
    tol: float = 1e-8              # corrector mismatch target
    parameterization: str = "local"  # {"local", "arc_length"}
    max_steps: int = 2000

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.min_step < self.step_size:
            raise ValueError("need 0 < min_step < step_size")
        if self.parameterization not in ("local", "arc_length"):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")


def _lambda_column(case: NetworkCase, direction: LoadingDirection) -> np.ndarray:
    """d(residual)/d(lambda): minus the specified-injection increment."""
    ns = nonslack_indices(case)
    d_spec = (gen_p_per_bus(case, direction.d_pgen) - direction.d_pload
              - 1j * direction.d_qload)
    npv = len(case.pv_indices())
    return -np.concatenate([d_spec[ns].real, d_spec[ns].imag, np.zeros(npv)])


def _pack(case: NetworkCase, state: StateVector, lam: float) -> np.ndarray:
    ns = nonslack_indices(case)
    return np.concatenate([state.v[ns].real, state.v[ns].imag,
                           state.q_gen, [lam]])


def _unpack(case: NetworkCase, template: StateVector, z: np.ndarray) -> tuple[StateVector, float]:
    ns = nonslack_indices(case)
    nns = len(ns)
    v = template.v.copy()
    v[ns] = z[:nns] + 1j * z[nns:2 * nns]
    return StateVector(v=v, q_gen=z[2 * nns:-1].copy()), float(z[-1])


def _augmented(jac: sp.csc_matrix, f_lam: np.ndarray, row: np.ndarray) -> sp.csc_matrix:
    m = jac.shape[0]
    return sp.bmat([[jac, sp.csr_matrix(f_lam.reshape(m, 1))],
                    [sp.csr_matrix(row[:m].reshape(1, m)),
                     sp.csr_matrix(row[m:].reshape(1, 1))]], format="csc")


def _tangent(case, Y, state: StateVector, f_lam: np.ndarray,
             row: np.ndarray, t_prev: np.ndarray) -> np.ndarray:
    """Branch tangent: null direction of [J, f_lam] normalized by the row."""
    jac = jacobian(case, Y, state)
    aug = _augmented(jac, f_lam, row)
    rhs = np.zeros(aug.shape[0])
    rhs[-1] = 1.0
    t = factorize(aug).solve(rhs)
    if np.dot(t, t_prev) < 0:
        t = -t
    return t


def _correct(case, Y, state: StateVector, lam: float, direction,
             f_lam: np.ndarray, row: np.ndarray, target: float,
             tol: float) -> tuple[StateVector, float, int]:
    """Newton on the augmented system with constraint row . z = target."""
    z_template = state
    z = _pack(case, state, lam)
    for it in range(NEWTON_MAX_ITER + 1):
        st, lm = _unpack(case, z_template, z)
        mis = mismatch(case, Y, st, direction, lm).max_abs
        if mis <= tol and abs(np.dot(row, z) - target) <= tol:
            return st, lm, it
        if it == NEWTON_MAX_ITER:
            raise NonConvergence(f"corrector stalled at mismatch {mis:.3e}")
        r = residual_vector(case, Y, st, direction, lm)
        aug = _augmented(jacobian(case, Y, st), f_lam, row)
        rr = np.concatenate([r, [np.dot(row, z) - target]])
        dz = factorize(aug).solve(rr)
        if not np.all(np.isfinite(dz)) or np.max(np.abs(dz)) > 1e6:
            raise NonConvergence(f"corrector update diverged at iteration {it}")
        z = z - dz
    raise NonConvergence("unreachable")


def trace_cpf(case: NetworkCase, Y: AdmittanceMatrix, direction: LoadingDirection,
              config: CpfConfig = CpfConfig()) -> PVCurve:
    """Continuation trace of the upper P-V branch from lambda=0 to the nose."""
    if direction.is_zero():
        raise ValueError("loading direction is identically zero")
    try:
        base = solve_newton(case, Y, flat_start(case), direction, 0.0,
                            tol=config.tol)
    except (NonConvergence, SingularJacobian) as exc:
        raise BaseCaseUnsolvable(str(exc)) from exc

    f_lam = _lambda_column(case, direction)
    m = f_lam.size
    nns = len(nonslack_indices(case))
    lam_idx = m  # position of lambda in the packed vector
    counters = {"cpf_steps": 0, "corrector_iterations": 0,
                "step_halvings": 0, "parameter_switches": 0}
    points = [CurvePoint(base.lam, base.state, base.max_mismatch)]

    cur_state, cur_lam = base.state, 0.0
    t_prev = np.zeros(m + 1)
    t_prev[lam_idx] = 1.0
    k = lam_idx
    sigma = config.step_size
    converged = False

    while counters["cpf_steps"] < config.max_steps:
        row = np.zeros(m + 1)
        if config.parameterization == "local":
            row[k] = 1.0
        else:
            row = t_prev.copy()
        try:
            t = _tangent(case, Y, cur_state, f_lam, row, t_prev)
        except SingularJacobian:
            # parameterization row degenerate at this point: force a switch
            t = t_prev
        # candidates are lambda and the voltage components only; the PV
        # reactive unknowns move fast but make poor continuation parameters
        cand = np.abs(t).copy()
        cand[2 * nns:m] = 0.0
        k_next = int(np.argmax(cand))
        if k_next != k:
            counters["parameter_switches"] += 1
        z = _pack(case, cur_state, cur_lam)
        z_pred = z + sigma * t / abs(t[k_next])
        row = np.zeros(m + 1)
        if config.parameterization == "local":
            row[k_next] = 1.0
        else:
            row = t / np.linalg.norm(t)
        try:
            st, lm, its = _correct(case, Y, *(_unpack(case, cur_state, z_pred)),
                                   direction, f_lam, row,
                                   float(np.dot(row, z_pred)), config.tol)
        except (NonConvergence, SingularJacobian):
            sigma *= 0.5
            counters["step_halvings"] += 1
            if sigma < config.min_step:
                raise StallBeforeNose(
                    f"corrector kept failing down to the {config.min_step:g} "
                    f"step floor at lambda {cur_lam:.6f}")
            continue
        counters["corrector_iterations"] += its
        if lm <= cur_lam:
            # rounded the nose: reject, refine until the floor
            sigma *= 0.5
            counters["step_halvings"] += 1
            if sigma < config.min_step:
                converged = True
                break
            continue
        counters["cpf_steps"] += 1
        mis = mismatch(case, Y, st, direction, lm).max_abs
        points.append(CurvePoint(lm, st, mis))
        cur_state, cur_lam = st, lm
        t_prev, k = t, k_next

    nose = PowerFlowSolution(state=cur_state, lam=cur_lam,
                             max_mismatch=points[-1].max_mismatch,
                             converged=True, iterations=0)
    curve = PVCurve(stages=[], origin=base, nose=nose, nose_lambda=cur_lam,
                    converged=converged, counters=counters, points=points)
    return curve

"""AC power-flow residuals, loading parameterization and a Newton-Raphson solver.

Everything works in rectangular voltage coordinates so the residual is an
exact quadratic in the state; the embedding modules reuse the same algebra.
PV-bus reactive injections are kept as explicit unknowns rather than being
eliminated, which makes the per-order linear systems of the embeddings
uniform with the Newton Jacobian.

Conventions:
  * state x = (complex V per bus, q_gen per PV bus);
  * residual per non-slack bus: S_injected(V) - S_specified(lambda);
  * PV buses additionally carry |V|^2 - v_set^2 (internal, quadratic) while
    the reported mismatch uses |V| - v_set;
  * the slack bus voltage is held fixed and its power balance is excluded
    (the slack absorbs any direction imbalance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence, SingularJacobian
from .network import AdmittanceMatrix, BusKind, NetworkCase

NEWTON_MAX_ITER = 25


@dataclass(frozen=True)
class StateVector:
    """Complex bus voltages plus reactive injections of PV-bus generators.

    ``q_gen`` is ordered like ``case.pv_indices()`` and holds the total
    reactive power injected by the generator at each PV bus.
    """

    v: np.ndarray
    q_gen: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.v.copy(), self.q_gen.copy())


@dataclass(frozen=True)
class LoadingDirection:
    """Per-unit injection increments per unit of the loading parameter.

    ``d_pload``/``d_qload`` are per bus (case order); ``d_pgen`` is per
    generator (case.generators order).
    """

    d_pload: np.ndarray
    d_qload: np.ndarray
    d_pgen: np.ndarray

    @classmethod
    def proportional(cls, case: NetworkCase) -> "LoadingDirection":
        """All loads and generator active outputs grow in proportion to the base case."""
        return cls(
            d_pload=np.array([b.p_load for b in case.buses]),
            d_qload=np.array([b.q_load for b in case.buses]),
            d_pgen=np.array([g.p_gen for g in case.generators]),
        )

    @classmethod
    def zero(cls, case: NetworkCase) -> "LoadingDirection":
        return cls(
            d_pload=np.zeros(case.n_bus),
            d_qload=np.zeros(case.n_bus),
            d_pgen=np.zeros(len(case.generators)),
        )

    def is_zero(self) -> bool:
        return (
            not np.any(self.d_pload) and not np.any(self.d_qload)
            and not np.any(self.d_pgen)
        )

    def proportional_rate(self, case: NetworkCase, rtol: float = 1e-9) -> float | None:
        """Rate gamma such that S(lambda) = (1 + gamma*lambda) * S(0), or None.

        Only non-slack quantities matter: the slack bus absorbs any
        imbalance and its specified injection never enters the equations.
        """
        slack = case.buses[case.slack_index()].id
        pairs: list[tuple[float, float]] = []
        for i, b in enumerate(case.buses):
            if b.id == slack:
                continue
            pairs.append((b.p_load, self.d_pload[i]))
            pairs.append((b.q_load, self.d_qload[i]))
        for j, g in enumerate(case.generators):
            if g.bus == slack:
                continue
            pairs.append((g.p_gen, self.d_pgen[j]))
        gamma = None
        scale = max(abs(base) for base, _ in pairs) or 1.0
        for base, d in pairs:
            if abs(base) <= rtol * scale:
                if abs(d) > rtol * scale:
                    return None
                continue
            g = d / base
            if gamma is None:
                gamma = g
            elif abs(g - gamma) > rtol * max(1.0, abs(gamma)):
                return None
        if gamma is None or gamma == 0.0:
            return None
        return gamma


@dataclass(frozen=True)
class MismatchVector:
    """Residual of the power-flow equations at one candidate state.

    ``power`` is the complex power-balance residual per bus (zero at the
    slack), ``vm`` the magnitude residual |V| - v_set per PV bus and
    ``slack_v`` the complex slack voltage deviation.  The scalar norm is
    the infinity norm over all real components.
    """

    power: np.ndarray
    vm: np.ndarray
    slack_v: complex

    @property
    def max_abs(self) -> float:
        worst = float(np.max(np.abs(self.power))) if self.power.size else 0.0
        if self.vm.size:
            worst = max(worst, float(np.max(np.abs(self.vm))))
        return max(worst, abs(self.slack_v))

    def max_abs_mva(self, base_mva: float) -> float:
        return self.max_abs * base_mva


@dataclass(frozen=True)
class PowerFlowSolution:
    state: StateVector
    lam: float
    max_mismatch: float
    converged: bool
    iterations: int


# ---------------------------------------------------------------------------
# injections and mismatch

def gen_p_per_bus(case: NetworkCase, d_pgen: np.ndarray) -> np.ndarray:
    """Scatter a per-generator active-power vector onto the bus axis."""
    out = np.zeros(case.n_bus)
    np.add.at(out, case.gen_bus_positions(), d_pgen)
    return out


def specified_injections(case: NetworkCase, direction: LoadingDirection, lam: float) -> np.ndarray:
    """Complex specified injection per bus at loading lambda.

    The imaginary part carries only the (negated) reactive load; reactive
    generation at PV buses is a state variable and is added where needed.
    """
    p_load = np.array([b.p_load for b in case.buses]) + lam * direction.d_pload
    q_load = np.array([b.q_load for b in case.buses]) + lam * direction.d_qload
    p_gen = gen_p_per_bus(case, np.array([g.p_gen for g in case.generators])
                          + lam * direction.d_pgen)
    return (p_gen - p_load) + 1j * (-q_load)


def mismatch(case: NetworkCase, Y: AdmittanceMatrix, state: StateVector,
             direction: LoadingDirection, lam: float) -> MismatchVector:
    """Exact residual of the AC power-flow equations at loading lambda."""
    v = state.v
    s_calc = v * np.conj(Y.matrix @ v)
    s_spec = specified_injections(case, direction, lam).astype(complex)
    pv = case.pv_indices()
    s_spec[pv] += 1j * state.q_gen
    power = s_calc - s_spec
    slack = case.slack_index()
    sb = case.buses[slack]
    power[slack] = 0.0
    vm = np.abs(v[pv]) - np.array([case.buses[i].v_set for i in pv])
    slack_v = v[slack] - sb.v_set * np.exp(1j * sb.angle_set)
    return MismatchVector(power=power, vm=vm, slack_v=slack_v)


def flat_start(case: NetworkCase) -> StateVector:
    """Unit voltages at PQ buses, setpoint magnitudes at PV/slack, zero q_gen."""
    v = np.ones(case.n_bus, dtype=complex)
    for i, b in enumerate(case.buses):
        if b.kind is BusKind.PV:
            v[i] = b.v_set
        elif b.kind is BusKind.SLACK:
            v[i] = b.v_set * np.exp(1j * b.angle_set)
    return StateVector(v=v, q_gen=np.zeros(len(case.pv_indices())))


# ---------------------------------------------------------------------------
# quadratic residual and Jacobian in split-real form

def nonslack_indices(case: NetworkCase) -> np.ndarray:
    slack = case.slack_index()
    return np.array([i for i in range(case.n_bus) if i != slack], dtype=int)


def residual_vector(case: NetworkCase, Y: AdmittanceMatrix, state: StateVector,
                    direction: LoadingDirection, lam: float) -> np.ndarray:
    """Stacked real residual [Re S-bal; Im S-bal; |V|^2 - v_set^2] (quadratic form)."""
    v = state.v
    s_calc = v * np.conj(Y.matrix @ v)
    s_spec = specified_injections(case, direction, lam).astype(complex)
    pv = case.pv_indices()
    s_spec[pv] += 1j * state.q_gen
    r = s_calc - s_spec
    ns = nonslack_indices(case)
    vset2 = np.array([case.buses[i].v_set ** 2 for i in pv])
    mag = np.abs(v[pv]) ** 2 - vset2
    return np.concatenate([r[ns].real, r[ns].imag, mag])


def jacobian(case: NetworkCase, Y: AdmittanceMatrix, state: StateVector) -> sp.csc_matrix:
    """Analytic Jacobian of ``residual_vector`` wrt (Re V, Im V, q_gen), non-slack.

    With I = Y V, A = diag(conj I) + diag(V) conj(Y) and
    B = diag(conj I) - diag(V) conj(Y), the voltage block is
    [[Re A, -Im B], [Im A, Re B]].
    """
    v = state.v
    n = case.n_bus
    i_inj = Y.matrix @ v
    Yc = Y.matrix.conj()
    A = sp.diags(np.conj(i_inj)) + sp.diags(v) @ Yc
    B = sp.diags(np.conj(i_inj)) - sp.diags(v) @ Yc
    ns = nonslack_indices(case)
    A = A.tocsr()[ns][:, ns]
    B = B.tocsr()[ns][:, ns]
    Jv = sp.bmat([[A.real.tocsc(), (-B.imag).tocsc()],
                  [A.imag.tocsc(), B.real.tocsc()]], format="csc")

    pv = case.pv_indices()
    nns, npv = len(ns), len(pv)
    pos_in_ns = {b: k for k, b in enumerate(ns)}
    pv_pos = np.array([pos_in_ns[i] for i in pv], dtype=int)

    # q_gen column: -1 in the Im power row of the owning PV bus
    col_q = sp.coo_matrix(
        (-np.ones(npv), (nns + pv_pos, np.arange(npv))), shape=(2 * nns, npv)
    )
    # magnitude rows: [2e, 2f] at the PV bus columns
    e_pv, f_pv = v[pv].real, v[pv].imag
    rows = np.concatenate([np.arange(npv), np.arange(npv)])
    cols = np.concatenate([pv_pos, nns + pv_pos])
    data = np.concatenate([2.0 * e_pv, 2.0 * f_pv])
    mag_rows = sp.coo_matrix((data, (rows, cols)), shape=(npv, 2 * nns))

    return sp.bmat([[Jv, col_q], [mag_rows, None]], format="csc")


def factorize(matrix: sp.csc_matrix):
    """LU-factorize a sparse matrix, mapping singularity to SingularJacobian."""
    try:
        return spla.splu(matrix.tocsc())
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularJacobian(str(exc)) from exc


def apply_update(case: NetworkCase, state: StateVector, dx: np.ndarray) -> StateVector:
    ns = nonslack_indices(case)
    nns = len(ns)
    v = state.v.copy()
    v[ns] -= dx[:nns] + 1j * dx[nns:2 * nns]
    q = state.q_gen - dx[2 * nns:]
    return StateVector(v=v, q_gen=q)


def solve_newton(case: NetworkCase, Y: AdmittanceMatrix, x0: StateVector,
                 direction: LoadingDirection, lam: float, tol: float = 1e-8,
                 max_iter: int = NEWTON_MAX_ITER) -> PowerFlowSolution:
    """Full Newton-Raphson with one sparse LU solve per iteration.

    Raises SingularJacobian at/beyond the nose and NonConvergence when the
    iteration budget is exhausted or the update blows up.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    state = x0
    for it in range(max_iter + 1):
        mis = mismatch(case, Y, state, direction, lam)
        if mis.max_abs <= tol:
            return PowerFlowSolution(state=state, lam=lam, max_mismatch=mis.max_abs,
                                     converged=True, iterations=it)
        if it == max_iter:
            break
        r = residual_vector(case, Y, state, direction, lam)
        lu = factorize(jacobian(case, Y, state))
        dx = lu.solve(r)
        if not np.all(np.isfinite(dx)) or np.max(np.abs(dx)) > 1e6:
            raise NonConvergence(f"Newton update diverged at iteration {it}")
        state = apply_update(case, state, dx)
    raise NonConvergence(
        f"no convergence to {tol:g} within {max_iter} iterations "
        f"(mismatch {mis.max_abs:.3e})"
    )


def direction_from_dict(case: NetworkCase, spec: dict) -> LoadingDirection:
    """Build a loading direction from per-bus MW/MVAr increments.

    ``spec`` maps ``d_pload_mw``/``d_qload_mvar``/``d_pgen_mw`` to
    ``{bus_id: value}`` dicts; values are divided by base_mva.  A generation
    increment is split equally among the generators at the bus.
    """
    index = case.bus_index()
    known = {"d_pload_mw", "d_qload_mvar", "d_pgen_mw"}
    extra = set(spec) - known
    if extra:
        raise ValueError(f"unknown direction keys: {sorted(extra)}")
    d_pload = np.zeros(case.n_bus)
    d_qload = np.zeros(case.n_bus)
    d_pgen = np.zeros(len(case.generators))
    for key, target in (("d_pload_mw", d_pload), ("d_qload_mvar", d_qload)):
        for bid, mw in (spec.get(key) or {}).items():
            bid = int(bid)
            if bid not in index:
                raise ValueError(f"{key}: unknown bus {bid}")
            target[index[bid]] = float(mw) / case.base_mva
    for bid, mw in (spec.get("d_pgen_mw") or {}).items():
        bid = int(bid)
        owners = [j for j, g in enumerate(case.generators) if g.bus == bid]
        if not owners:
            raise ValueError(f"d_pgen_mw: no generator at bus {bid}")
        for j in owners:
            d_pgen[j] = float(mw) / case.base_mva / len(owners)
    return LoadingDirection(d_pload=d_pload, d_qload=d_qload, d_pgen=d_pgen)


def mw_per_lambda(case: NetworkCase, direction: LoadingDirection) -> float:
    """MW of total load (or, failing that, generation) added per unit lambda."""
    load = float(np.sum(np.abs(direction.d_pload)))
    gen = float(np.sum(np.abs(direction.d_pgen)))
    q = float(np.sum(np.abs(direction.d_qload)))
    return case.base_mva * (load or gen or q)

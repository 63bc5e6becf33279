"""Holomorphic-embedding voltage series.

Builds per-bus voltage (and per-PV-bus reactive-power) power series in the
embedding parameter s for three embedding variants:

  M1  no PV buses, non-physical germ: shunts scaled with s, injections s*S;
  M3  physical germ at zero injection, injections s*S;
  M4  physical germ at an arbitrary exact operating point, injections
      S_anchor + s*dS (the load may move up or down from there).

The embedded equations for a non-slack bus i are

    sum_k Y_ik V_k(s) = conj(S_i)(s) * conj(W_i)(s*),   W_i = 1/V_i,

with the embedded injection affine in s, PV buses carrying the additional
magnitude constraint V_i(s) conj(V_i)(s*) = m_i(s) (affine) and their
reactive injection as an unknown real-coefficient series.  Keeping W as an
explicit unknown series makes the per-order left-hand matrix constant: it
is assembled once in split-real form, LU-factorized once, and reused for
every order; right-hand sides are convolutions of lower-order coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import series as se
from .errors import GermNotFound, NonConvergence, SingularEmbeddingMatrix, SingularJacobian
from .network import AdmittanceMatrix, Bus, NetworkCase
from .powerflow import (
    LoadingDirection,
    StateVector,
    flat_start,
    gen_p_per_bus,
    nonslack_indices,
    solve_newton,
    specified_injections,
)

GERM_TOL = 1e-12


@dataclass(frozen=True)
class EmbeddingVariant:
    """Embedding selector.  ``k_scale`` scales the M4 load increment."""

    tag: str  # "M1" | "M3" | "M4"
    k_scale: float = 1.0

    def __post_init__(self):
        if self.tag not in ("M1", "M3", "M4"):
            raise ValueError(f"unknown embedding variant {self.tag!r}")


M1 = EmbeddingVariant("M1")
M3 = EmbeddingVariant("M3")
M4 = EmbeddingVariant("M4")


@dataclass(frozen=True)
class GermSolution:
    state: StateVector
    physical: bool


@dataclass
class HemSeries:
    """Voltage/reactive-power series of one embedding, plus its loading map.

    ``lambda_of_s`` is affine (lam0 + slope*s) whenever the embedded
    injection path stays on the loading ray; otherwise only s=1 corresponds
    to a loading (``lam_s1``) and ``lam0`` is None.
    """

    variant: EmbeddingVariant
    order: int
    v_coeffs: np.ndarray  # (order+1, n_bus) complex
    q_coeffs: np.ndarray  # (order+1, n_pv) real
    germ: GermSolution
    anchor_lambda: float
    direction: LoadingDirection
    lam0: float | None
    lam_slope: float
    lam_s1: float
    order_residuals: list[float] = field(default_factory=list)
    _pade_v: list = field(default_factory=list, repr=False)
    _pade_q: list = field(default_factory=list, repr=False)

    def lambda_of_s(self, s: float) -> float:
        if self.lam0 is None:
            if abs(s - 1.0) > 1e-12:
                raise ValueError(
                    "direction is not ray-compatible with this embedding: "
                    "only s=1 maps to a loading"
                )
            return self.lam_s1
        return self.lam0 + self.lam_slope * s

    def s_of_lambda(self, lam: float) -> float:
        if self.lam0 is None:
            raise ValueError("no affine loading map for this series")
        return (lam - self.lam0) / self.lam_slope


def physical_germ(case: NetworkCase, Y: AdmittanceMatrix) -> GermSolution:
    """Operating point with all controllable injections at zero.

    Loads and generator active outputs are zeroed while slack/PV voltage
    setpoints stay in force; PV generators keep whatever reactive output the
    setpoints demand.  This point lies on the s=0 end of every physical
    embedding.
    """
    zero_buses = tuple(
        Bus(b.id, b.kind, 0.0, 0.0, b.shunt_g, b.shunt_b, b.v_set, b.angle_set)
        for b in case.buses
    )
    zero_gens = tuple(
        type(g)(g.bus, 0.0, g.q_min, g.q_max, g.v_set) for g in case.generators
    )
    zero_case = NetworkCase(case.base_mva, zero_buses, case.branches, zero_gens,
                            name=case.name)
    try:
        sol = solve_newton(zero_case, Y, flat_start(zero_case),
                           LoadingDirection.zero(zero_case), 0.0,
                           tol=GERM_TOL, max_iter=40)
    except (NonConvergence, SingularJacobian) as exc:
        raise GermNotFound(f"zero-injection power flow failed: {exc}") from exc
    return GermSolution(state=sol.state, physical=True)


def linear_germ(case: NetworkCase, Y: AdmittanceMatrix) -> GermSolution:
    """Non-physical M1 germ: the network with shunts and injections removed.

    Solves the linear system Y_series V = 0 with the slack voltage fixed.
    Only valid for systems without PV buses.
    """
    if len(case.pv_indices()):
        raise SingularEmbeddingMatrix("M1 does not support PV buses")
    sl = case.slack_index()
    ns = nonslack_indices(case)
    sb = case.buses[sl]
    v = np.zeros(case.n_bus, dtype=complex)
    v[sl] = sb.v_set * np.exp(1j * sb.angle_set)
    A = Y.series.tocsr()[ns][:, ns].tocsc()
    rhs = -Y.series.tocsr()[ns][:, [sl]].toarray().ravel() * v[sl]
    try:
        v[ns] = spla.splu(A).solve(rhs)
    except RuntimeError as exc:
        raise SingularEmbeddingMatrix(str(exc)) from exc
    return GermSolution(state=StateVector(v=v, q_gen=np.zeros(0)), physical=False)


# ---------------------------------------------------------------------------

def _embedded_injections(case: NetworkCase, variant: EmbeddingVariant,
                         direction: LoadingDirection, anchor_lambda: float,
                         horizon: float):
    """Affine embedded injection S(s) = A + s*B per bus, and the loading map."""
    if variant.tag in ("M1", "M3"):
        A = np.zeros(case.n_bus, dtype=complex)
        B = specified_injections(case, direction, horizon)
        ql0 = np.zeros(case.n_bus)
        ql1 = np.array([b.q_load for b in case.buses]) + horizon * direction.d_qload
        gamma = direction.proportional_rate(case)
        if gamma is not None:
            lam0 = -1.0 / gamma
            slope = (1.0 + gamma * horizon) / gamma
        else:
            lam0, slope = None, 0.0
        lam_s1 = horizon
    else:  # M4
        A = specified_injections(case, direction, anchor_lambda)
        step = variant.k_scale * horizon
        d_inj = (gen_p_per_bus(case, direction.d_pgen) - direction.d_pload
                 - 1j * direction.d_qload)
        B = step * d_inj
        ql0 = np.array([b.q_load for b in case.buses]) + anchor_lambda * direction.d_qload
        ql1 = step * direction.d_qload
        lam0, slope = anchor_lambda, step
        lam_s1 = anchor_lambda + step
    return A, B, ql0, ql1, lam0, slope, lam_s1


def _real_block(rows, cols, alpha, coo, offset_r, offset_c_re, offset_c_im, nns):
    """Append split-real entries for a complex term alpha * u."""
    r, c, d = coo
    r += [offset_r + k for k in rows] + [offset_r + nns + k for k in rows]
    c += [offset_c_re + k for k in cols] + [offset_c_re + k for k in cols]
    d += list(np.real(alpha)) + list(np.imag(alpha))
    r += [offset_r + k for k in rows] + [offset_r + nns + k for k in rows]
    c += [offset_c_im + k for k in cols] + [offset_c_im + k for k in cols]
    d += list(-np.imag(alpha)) + list(np.real(alpha))


def _real_block_conj(rows, cols, beta, coo, offset_r, offset_c_re, offset_c_im, nns):
    """Append split-real entries for a complex term beta * conj(u)."""
    r, c, d = coo
    r += [offset_r + k for k in rows] + [offset_r + nns + k for k in rows]
    c += [offset_c_re + k for k in cols] + [offset_c_re + k for k in cols]
    d += list(np.real(beta)) + list(np.imag(beta))
    r += [offset_r + k for k in rows] + [offset_r + nns + k for k in rows]
    c += [offset_c_im + k for k in cols] + [offset_c_im + k for k in cols]
    d += list(np.imag(beta)) + list(-np.real(beta))


def build_series(case: NetworkCase, Y: AdmittanceMatrix, variant: EmbeddingVariant,
                 anchor: StateVector, anchor_lambda: float,
                 direction: LoadingDirection, order: int,
                 horizon: float = 1.0) -> HemSeries:
    """Recursive coefficient computation for one embedding.

    ``horizon`` fixes the loading reached at s=1: the target lambda for
    M1/M3 (whose anchor must be the germ) and the lambda increment above
    ``anchor_lambda`` for M4.  One constant split-real matrix is factorized
    and reused for all orders >= 1.
    """
    n = case.n_bus
    sl = case.slack_index()
    ns = nonslack_indices(case)
    pv = case.pv_indices()
    nns, npv = len(ns), len(pv)
    pos_in_ns = {b: k for k, b in enumerate(ns)}
    pv_pos = np.array([pos_in_ns[i] for i in pv], dtype=int)
    is_pv = np.zeros(n, dtype=bool)
    is_pv[pv] = True

    A, B, ql0, ql1, lam0, slope, lam_s1 = _embedded_injections(
        case, variant, direction, anchor_lambda, horizon)
    # conj-coefficient (holomorphic) version of the embedded injection
    CA, CB = np.conj(A), np.conj(B)
    p_aff = np.vstack([A.real, B.real])          # per-bus P(s) = p0 + p1 s
    ql_aff = np.vstack([ql0, ql1])

    v0 = anchor.v.astype(complex)
    w0 = np.zeros(n, dtype=complex)
    w0[ns] = 1.0 / v0[ns]
    q0 = anchor.q_gen.astype(float)

    # D_i(s) order-0 coefficient (conj of embedded injection at s=0):
    # PQ: conj(A); PV: P(0) - j Q(0) with Q(0) = q_gen0 - ql0.
    D0 = CA.copy()
    D0[pv] = p_aff[0, pv] - 1j * (q0 - ql_aff[0, pv])

    mag_aff = np.zeros((2, npv))
    if npv:
        vset = np.array([case.buses[i].v_set for i in pv])
        mag_aff[0] = np.abs(v0[pv]) ** 2
        mag_aff[1] = vset ** 2 - mag_aff[0]

    # ----- constant split-real matrix ------------------------------------
    # unknown layout: [Re v_ns, Im v_ns, Re w_ns, Im w_ns, q_pv]
    # row layout:     [power Re/Im (2nns), reciprocal Re/Im (2nns), mag (npv)]
    OV, OW, OQ = 0, 2 * nns, 4 * nns
    RP, RR, RM = 0, 2 * nns, 4 * nns
    coo: tuple[list, list, list] = ([], [], [])

    Ymat = Y.series if variant.tag == "M1" else Y.matrix
    Yns = sp.coo_matrix(Ymat.tocsr()[ns][:, ns])
    _real_block(list(Yns.row), list(Yns.col), Yns.data, coo, RP, OV, OV + nns, nns)
    # -D0 * conj(w_i) on the power row of each bus that carries a W series
    _real_block_conj(list(range(nns)), list(range(nns)), -D0[ns], coo,
                     RP, OW, OW + nns, nns)
    # +j q_k * conj(w0) on PV power rows (q real: only one column each)
    r, c, d = coo
    jw0 = 1j * np.conj(w0[pv])
    r += [RP + k for k in pv_pos] + [RP + nns + k for k in pv_pos]
    c += [OQ + k for k in range(npv)] * 2
    d += list(np.real(jw0)) + list(np.imag(jw0))
    # reciprocal rows: v0 * w_k + w0 * v_k
    _real_block(list(range(nns)), list(range(nns)), v0[ns], coo, RR, OW, OW + nns, nns)
    _real_block(list(range(nns)), list(range(nns)), w0[ns], coo, RR, OV, OV + nns, nns)
    # magnitude rows: 2 Re(conj(v0) v_k)
    r, c, d = coo
    r += [RM + k for k in range(npv)] * 2
    c += [OV + k for k in pv_pos] + [OV + nns + k for k in pv_pos]
    d += list(2.0 * v0[pv].real) + list(2.0 * v0[pv].imag)

    M = 4 * nns + npv
    lhs = sp.coo_matrix((coo[2], (coo[0], coo[1])), shape=(M, M)).tocsc()
    try:
        lu = spla.splu(lhs)
    except RuntimeError as exc:
        raise SingularEmbeddingMatrix(str(exc)) from exc

    # ----- order recursion ------------------------------------------------
    V = np.zeros((order + 1, n), dtype=complex)
    W = np.zeros((order + 1, n), dtype=complex)
    Q = np.zeros((order + 1, npv))
    V[0], W[0], Q[0] = v0, w0, q0
    Dk = np.zeros((order + 1, n), dtype=complex)  # known D coefficients
    Dk[0] = D0
    residuals: list[float] = []
    shunt_ns = Y.shunt[ns] if variant.tag == "M1" else None

    for k in range(1, order + 1):
        rhs = np.zeros(M)
        # power-balance RHS
        pb = np.zeros(n, dtype=complex)
        # sum_{m=1..k-1} D[m] * conj(W[k-m])
        for m in range(1, k):
            pb[ns] += Dk[m, ns] * np.conj(W[k - m, ns])
        # order-k known part of D: PQ conj(B) at k=1; PV p1 + j ql1 at k=1
        if k == 1:
            dk_known = CB.copy()
            dk_known[pv] = p_aff[1, pv] + 1j * ql_aff[1, pv]
            pb[ns] += dk_known[ns] * np.conj(W[0, ns])
        if variant.tag == "M1":
            pb[ns] -= shunt_ns * V[k - 1, ns]
        rhs[RP:RP + nns] = pb[ns].real
        rhs[RP + nns:RP + 2 * nns] = pb[ns].imag
        # reciprocal RHS: -sum_{m=1..k-1} V[m] W[k-m]
        rec = np.zeros(n, dtype=complex)
        for m in range(1, k):
            rec[ns] -= V[m, ns] * W[k - m, ns]
        rhs[RR:RR + nns] = rec[ns].real
        rhs[RR + nns:RR + 2 * nns] = rec[ns].imag
        # magnitude RHS
        if npv:
            mg = (mag_aff[1] if k == 1 else np.zeros(npv)).astype(complex)
            for m in range(1, k):
                mg -= V[m, pv] * np.conj(V[k - m, pv])
            rhs[RM:RM + npv] = mg.real

        x = lu.solve(rhs)
        V[k, ns] = x[OV:OV + nns] + 1j * x[OV + nns:OV + 2 * nns]
        W[k, ns] = x[OW:OW + nns] + 1j * x[OW + nns:OW + 2 * nns]
        Q[k] = x[OQ:OQ + npv]
        # full D coefficient at order k, now that q[k] is known
        dk = np.zeros(n, dtype=complex)
        if k == 1:
            dk[ns] = CB[ns]
            dk[pv] = p_aff[1, pv] + 1j * ql_aff[1, pv]
        dk[pv] += -1j * Q[k]
        Dk[k] = dk
        residuals.append(float(np.max(np.abs(lhs @ x - rhs))))

    germ = GermSolution(state=anchor, physical=variant.tag in ("M3", "M4"))
    return HemSeries(variant=variant, order=order, v_coeffs=V, q_coeffs=Q,
                     germ=germ, anchor_lambda=anchor_lambda, direction=direction,
                     lam0=lam0, lam_slope=slope, lam_s1=lam_s1,
                     order_residuals=residuals)


# ---------------------------------------------------------------------------

def evaluate(hem: HemSeries, s: complex, method: str = "pade") -> StateVector:
    """Evaluate the embedding at s by truncated summation or Pade approximants."""
    if method not in ("direct", "pade"):
        raise ValueError(f"unknown evaluation method {method!r}")
    if method == "direct" or hem.order < 2:
        v = se.eval_series(hem.v_coeffs, s)
        q = se.eval_series(hem.q_coeffs.astype(complex), s).real if hem.q_coeffs.size \
            else np.zeros(0)
        return StateVector(v=np.asarray(v), q_gen=np.asarray(q))
    if not hem._pade_v:
        hem._pade_v = [se.pade_from_series(hem.v_coeffs[:, i])
                       for i in range(hem.v_coeffs.shape[1])]
        hem._pade_q = [se.pade_from_series(hem.q_coeffs[:, i].astype(complex))
                       for i in range(hem.q_coeffs.shape[1])]
    v = np.array([se.pade_eval(p, s) for p in hem._pade_v])
    q = np.array([se.pade_eval(p, s).real for p in hem._pade_q])
    return StateVector(v=v, q_gen=q)

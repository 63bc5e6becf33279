"""Network case model: parsing, validation, serialization and the bus admittance matrix.

Supported inputs are a strict subset of the MATPOWER text format (the
``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen`` and ``mpc.branch`` tables) and an
equivalent JSON schema.  All quantities are converted to per-unit on the
system MVA base at parse time; megawatts only appear at the CLI boundary.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import CaseFormatError, CaseSemanticsError


class BusKind(Enum):
    PQ = "PQ"
    PV = "PV"
    SLACK = "Slack"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_load: float = 0.0
    q_load: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    v_set: float = 1.0      # meaningful for Slack/PV only
    angle_set: float = 0.0  # meaningful for Slack only (radians)


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    phase_shift: float = 0.0  # radians
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float
    q_min: float = -999.0
    q_max: float = 999.0
    v_set: float = 1.0


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    name: str = ""

    def __post_init__(self):
        _validate(self)

    # -- indexing helpers -------------------------------------------------

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_index(self) -> dict[int, int]:
        """Map bus id -> position in the bus list."""
        return {b.id: i for i, b in enumerate(self.buses)}

    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind is BusKind.SLACK)

    def pv_indices(self) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.buses) if b.kind is BusKind.PV], dtype=int)

    def pq_indices(self) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.buses) if b.kind is BusKind.PQ], dtype=int)

    def gen_bus_positions(self) -> np.ndarray:
        idx = self.bus_index()
        return np.array([idx[g.bus] for g in self.generators], dtype=int)


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance matrix with the shunt part kept separately.

    ``matrix`` is the full Y.  ``series`` holds only the branch series
    contributions and ``shunt`` the per-bus diagonal from bus shunts and
    line charging, so that ``matrix = series + diag(shunt)``.  Some
    embedding variants scale the shunt part with the embedding parameter.
    """

    matrix: sp.csc_matrix
    series: sp.csc_matrix
    shunt: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


# ---------------------------------------------------------------------------
# validation

def _validate(case: NetworkCase) -> None:
    if case.base_mva <= 0:
        raise CaseSemanticsError(f"base_mva must be positive, got {case.base_mva}")
    seen: set[int] = set()
    for b in case.buses:
        if b.id in seen:
            raise CaseSemanticsError(f"duplicate bus id {b.id}")
        seen.add(b.id)
        if b.kind in (BusKind.SLACK, BusKind.PV) and b.v_set <= 0:
            raise CaseSemanticsError(f"bus {b.id}: v_set must be positive")
    slacks = [b.id for b in case.buses if b.kind is BusKind.SLACK]
    if len(slacks) == 0:
        raise CaseSemanticsError("no slack bus")
    if len(slacks) > 1:
        raise CaseSemanticsError(f"multiple slack buses: {slacks}")
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise CaseSemanticsError(f"branch {br.from_bus}-{br.to_bus}: unknown bus {end}")
        if br.in_service and br.r == 0.0 and br.x == 0.0:
            raise CaseSemanticsError(f"branch {br.from_bus}-{br.to_bus}: zero impedance")
        if br.tap <= 0:
            raise CaseSemanticsError(f"branch {br.from_bus}-{br.to_bus}: tap must be positive")
    gen_buses: set[int] = set()
    for g in case.generators:
        if g.bus not in seen:
            raise CaseSemanticsError(f"generator references unknown bus {g.bus}")
        if g.bus in gen_buses:
            raise CaseSemanticsError(f"multiple generators on bus {g.bus} (aggregate first)")
        gen_buses.add(g.bus)
        if g.q_min > g.q_max:
            raise CaseSemanticsError(f"generator at bus {g.bus}: q_min > q_max")


# ---------------------------------------------------------------------------
# MATPOWER-style text parsing

_TABLE_RE = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[(.*?)\];", re.S)
_BASE_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE.+-]+)\s*;")
_NAME_RE = re.compile(r"function\s+mpc\s*=\s*(\w+)")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_rows(body: str, table: str, text: str) -> list[list[float]]:
    line0 = text[: text.index(body)].count("\n") + 1
    rows = []
    pos = 0
    for chunk in body.split(";"):
        line = line0 + body[:pos].count("\n")
        pos += len(chunk) + 1
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in chunk.split()])
        except ValueError as exc:
            raise CaseFormatError(f"mpc.{table}: bad numeric row {chunk!r}", line=line) from exc
    return rows


def _parse_matpower(text: str) -> NetworkCase:
    stripped = _strip_comments(text)
    m = _BASE_RE.search(stripped)
    if m is None:
        raise CaseFormatError("missing mpc.baseMVA")
    base = float(m.group(1))
    name_m = _NAME_RE.search(stripped)
    name = name_m.group(1) if name_m else ""

    tables: dict[str, list[list[float]]] = {}
    for tm in _TABLE_RE.finditer(stripped):
        tables[tm.group(1)] = _parse_rows(tm.group(2), tm.group(1), stripped)
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseFormatError(f"missing mpc.{required} table")

    kind_map = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}
    buses = []
    for row in tables["bus"]:
        if len(row) < 13:
            raise CaseFormatError(f"mpc.bus row needs 13 columns, got {len(row)}")
        btype = int(row[1])
        if btype == 4:
            continue  # isolated bus per MATPOWER convention
        if btype not in kind_map:
            raise CaseFormatError(f"bus {int(row[0])}: unknown type {btype}")
        buses.append(
            Bus(
                id=int(row[0]),
                kind=kind_map[btype],
                p_load=row[2] / base,
                q_load=row[3] / base,
                shunt_g=row[4] / base,
                shunt_b=row[5] / base,
                v_set=row[7] if row[7] > 0 else 1.0,
                angle_set=math.radians(row[8]),
            )
        )

    # aggregate in-service generators per bus
    agg: dict[int, list[list[float]]] = {}
    for row in tables["gen"]:
        if len(row) < 10:
            raise CaseFormatError(f"mpc.gen row needs 10 columns, got {len(row)}")
        if int(row[7]) == 0:
            continue
        agg.setdefault(int(row[0]), []).append(row)
    generators = []
    for bus_id, rows in agg.items():
        generators.append(
            Generator(
                bus=bus_id,
                p_gen=sum(r[1] for r in rows) / base,
                q_max=sum(r[3] for r in rows) / base,
                q_min=sum(r[4] for r in rows) / base,
                v_set=rows[0][5],
            )
        )

    branches = []
    for row in tables["branch"]:
        if len(row) < 11:
            raise CaseFormatError(f"mpc.branch row needs 11 columns, got {len(row)}")
        branches.append(
            Branch(
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                r=row[2],
                x=row[3],
                b_charging=row[4],
                tap=row[8] if row[8] != 0.0 else 1.0,
                phase_shift=math.radians(row[9]),
                in_service=int(row[10]) != 0,
            )
        )

    # generator voltage setpoints override the bus table on PV/slack buses
    vset = {g.bus: g.v_set for g in generators}
    fixed = []
    for b in buses:
        if b.kind in (BusKind.PV, BusKind.SLACK) and b.id in vset and vset[b.id] > 0:
            b = Bus(b.id, b.kind, b.p_load, b.q_load, b.shunt_g, b.shunt_b,
                    vset[b.id], b.angle_set)
        fixed.append(b)

    return NetworkCase(base, tuple(fixed), tuple(branches), tuple(generators), name=name)


# ---------------------------------------------------------------------------
# JSON round trip

def case_to_json(case: NetworkCase) -> str:
    """Canonical JSON serialization (per-unit, sorted keys, fixed layout)."""
    doc = {
        "base_mva": case.base_mva,
        "name": case.name,
        "buses": [
            {
                "id": b.id, "kind": b.kind.value, "p_load": b.p_load, "q_load": b.q_load,
                "shunt_g": b.shunt_g, "shunt_b": b.shunt_b, "v_set": b.v_set,
                "angle_set": b.angle_set,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
                "b_charging": br.b_charging, "tap": br.tap,
                "phase_shift": br.phase_shift, "in_service": br.in_service,
            }
            for br in case.branches
        ],
        "generators": [
            {
                "bus": g.bus, "p_gen": g.p_gen, "q_min": g.q_min, "q_max": g.q_max,
                "v_set": g.v_set,
            }
            for g in case.generators
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def _parse_json(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    try:
        buses = tuple(
            Bus(
                id=int(b["id"]), kind=BusKind(b["kind"]),
                p_load=float(b.get("p_load", 0.0)), q_load=float(b.get("q_load", 0.0)),
                shunt_g=float(b.get("shunt_g", 0.0)), shunt_b=float(b.get("shunt_b", 0.0)),
                v_set=float(b.get("v_set", 1.0)), angle_set=float(b.get("angle_set", 0.0)),
            )
            for b in doc["buses"]
        )
        branches = tuple(
            Branch(
                from_bus=int(br["from"]), to_bus=int(br["to"]),
                r=float(br["r"]), x=float(br["x"]),
                b_charging=float(br.get("b_charging", 0.0)),
                tap=float(br.get("tap", 1.0)),
                phase_shift=float(br.get("phase_shift", 0.0)),
                in_service=bool(br.get("in_service", True)),
            )
            for br in doc["branches"]
        )
        generators = tuple(
            Generator(
                bus=int(g["bus"]), p_gen=float(g["p_gen"]),
                q_min=float(g.get("q_min", -999.0)), q_max=float(g.get("q_max", 999.0)),
                v_set=float(g.get("v_set", 1.0)),
            )
            for g in doc["generators"]
        )
        return NetworkCase(float(doc["base_mva"]), buses, branches, generators,
                           name=str(doc.get("name", "")))
    except (KeyError, ValueError, TypeError) as exc:
        raise CaseFormatError(f"malformed case JSON: {exc}") from exc


def parse_case(text: str) -> NetworkCase:
    """Parse MATPOWER-style text or the mirrored JSON format into a validated case."""
    head = text.lstrip()
    if head.startswith("{"):
        return _parse_json(text)
    return _parse_matpower(text)


# ---------------------------------------------------------------------------
# admittance assembly

def build_admittance(case: NetworkCase) -> AdmittanceMatrix:
    """Standard pi-model assembly with off-nominal taps and phase shifts.

    Tap complex ratio t = tap * e^{j phase} sits on the from side:
    Yff = (y + jb/2)/|t|^2, Yft = -y/conj(t), Ytf = -y/t, Ytt = y + jb/2.
    """
    n = case.n_bus
    idx = case.bus_index()
    series = sp.lil_matrix((n, n), dtype=complex)
    shunt = np.array([complex(b.shunt_g, b.shunt_b) for b in case.buses])

    for br in case.branches:
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        ratio = br.tap * np.exp(1j * br.phase_shift)
        a2 = br.tap * br.tap
        series[f, f] += y / a2
        series[t, t] += y
        series[f, t] += -y / np.conj(ratio)
        series[t, f] += -y / ratio
        bsh = 1j * br.b_charging / 2.0
        shunt[f] += bsh / a2
        shunt[t] += bsh

    series = series.tocsc()
    matrix = (series + sp.diags(shunt)).tocsc()
    return AdmittanceMatrix(matrix=matrix, series=series, shunt=shunt)

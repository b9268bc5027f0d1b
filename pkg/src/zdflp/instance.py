"""Problem instances for the zone-based dynamic facility layout problem.

An instance is read from a JSON document (see ``INSTANCE_SCHEMA``), turned
into immutable dataclasses and validated.  Zones are numbered ``1..count``,
periods ``1..periods`` and departments carry string identifiers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import jsonschema

AXES = ("x", "y")
SIDES = ("e", "w", "s", "n")
DEFAULT_DELTA = 20


class InstanceError(ValueError):
    """Raised when an instance document does not match the schema."""


class ValidationError(ValueError):
    """Raised when a parsed instance breaks one or more invariants."""

    def __init__(self, violations: list[Issue]):
        self.violations = violations
        lines = "; ".join(f"[{v.code}] {v.message}" for v in violations)
        super().__init__(f"{len(violations)} invariant violation(s): {lines}")


@dataclass(frozen=True)
class Issue:
    code: str
    message: str


@dataclass(frozen=True)
class Facility:
    len_x: float
    len_y: float

    def length(self, axis: str) -> float:
        return self.len_x if axis == "x" else self.len_y


@dataclass(frozen=True)
class Department:
    id: str
    area_by_period: dict[int, float]
    min_side_by_period: dict[int, tuple[float, float]]
    max_side_by_period: dict[int, tuple[float, float]]
    replaces: str | None = None

    @property
    def active_periods(self) -> tuple[int, ...]:
        return tuple(sorted(self.area_by_period))

    def area(self, t: int) -> float:
        return self.area_by_period[t]

    def min_side(self, t: int, axis: str) -> float:
        return self.min_side_by_period[t][AXES.index(axis)]

    def max_side(self, t: int, axis: str) -> float:
        return self.max_side_by_period[t][AXES.index(axis)]


@dataclass(frozen=True)
class FlowRecord:
    src: str
    dst: str
    period: int
    flow: float
    unit_cost: float


@dataclass(frozen=True)
class CostParams:
    fixed_rearrange: dict[tuple[str, int], float] = field(default_factory=dict)
    unit_rearrange: dict[tuple[str, int], float] = field(default_factory=dict)
    zone_boundary: dict[tuple[int, int], float] = field(default_factory=dict)

    def fixed(self, i: str, t: int) -> float:
        return self.fixed_rearrange.get((i, t), 0.0)

    def unit(self, i: str, t: int) -> float:
        return self.unit_rearrange.get((i, t), 0.0)

    def boundary(self, k: int, t: int) -> float:
        return self.zone_boundary.get((k, t), 0.0)


@dataclass(frozen=True)
class ZoneConfig:
    zone_count: int
    # zone -> "x" (departments laid out along x, beta=0) or "y" (beta=1)
    pinned_orientation: dict[int, str] = field(default_factory=dict)
    # (k, h, axis, t): zone k precedes zone h along axis in period t
    pinned_precedence: frozenset[tuple[int, int, str, int]] = frozenset()
    pinned_assignment: frozenset[tuple[str, int, int]] = frozenset()

    @property
    def zones(self) -> tuple[int, ...]:
        return tuple(range(1, self.zone_count + 1))


@dataclass(frozen=True)
class Instance:
    facility: Facility
    departments: tuple[Department, ...]
    flows: tuple[FlowRecord, ...]
    costs: CostParams
    zones: ZoneConfig
    periods: int
    delta: int = DEFAULT_DELTA
    # Extension point: a replacement department is costed against the
    # geometry of the department it replaces.  Off by default.
    inherit_replacements: bool = False
    name: str = ""

    @property
    def period_range(self) -> tuple[int, ...]:
        return tuple(range(1, self.periods + 1))

    def department(self, i: str) -> Department:
        return self._by_id[i]

    @property
    def _by_id(self) -> dict[str, Department]:
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {d.id: d for d in self.departments}
            object.__setattr__(self, "_by_id_cache", cache)
        return cache

    def order(self, i: str) -> int:
        """Position of a department in the document; defines ``i < j``."""
        pos = self.__dict__.get("_pos_cache")
        if pos is None:
            pos = {d.id: n for n, d in enumerate(self.departments)}
            object.__setattr__(self, "_pos_cache", pos)
        return pos[i]

    def active(self, t: int) -> tuple[str, ...]:
        """Departments in use in period ``t``, in document order."""
        return tuple(d.id for d in self.departments if t in d.area_by_period)

    def is_active(self, i: str, t: int) -> bool:
        return t in self._by_id[i].area_by_period

    def predecessor(self, i: str, t: int) -> str | None:
        """Department whose period ``t-1`` geometry ``i`` is compared against.

        ``None`` means period ``t`` carries no rearrangement terms for ``i``.
        """
        if t <= 1 or not self.is_active(i, t):
            return None
        if self.is_active(i, t - 1):
            return i
        p = self._by_id[i].replaces
        if self.inherit_replacements and p in self._by_id and self.is_active(p, t - 1):
            return p
        return None


def flow_pairs(inst: Instance, t: int) -> list[tuple[str, str, float]]:
    """Unordered department pairs with positive combined flow cost in period ``t``.

    Both flow directions are merged into a single weight because rectilinear
    distance is symmetric.  Pairs come back as ``(i, j, w)`` with ``i`` before
    ``j`` in document order.
    """
    weights: dict[tuple[str, str], float] = {}
    for rec in inst.flows:
        if rec.period != t or rec.src == rec.dst:
            continue
        i, j = sorted((rec.src, rec.dst), key=inst.order)
        weights[i, j] = weights.get((i, j), 0.0) + rec.flow * rec.unit_cost
    active = set(inst.active(t))
    return [
        (i, j, w)
        for (i, j), w in sorted(weights.items(), key=lambda kv: (inst.order(kv[0][0]), inst.order(kv[0][1])))
        if w > 0 and i in active and j in active
    ]


# --------------------------------------------------------------------------
# validation

def _precedence_cycles(pins: Iterable[tuple[int, int, str, int]]) -> list[tuple[str, int]]:
    graphs: dict[tuple[str, int], dict[int, set[int]]] = {}
    for k, h, r, t in pins:
        graphs.setdefault((r, t), {}).setdefault(k, set()).add(h)
    bad = []
    for key, g in sorted(graphs.items()):
        state: dict[int, int] = {}

        def visit(u: int) -> bool:
            state[u] = 1
            for w in g.get(u, ()):
                if state.get(w) == 1 or (state.get(w) is None and visit(w)):
                    return True
            state[u] = 2
            return False

        if any(state.get(u) is None and visit(u) for u in sorted(g)):
            bad.append(key)
    return bad


def validate(inst: Instance) -> list[Issue]:
    """Check every instance invariant; an empty list means the instance is valid."""
    out: list[Issue] = []

    def add(code: str, msg: str) -> None:
        out.append(Issue(code, msg))

    fac = inst.facility
    if not (fac.len_x > 0 and fac.len_y > 0):
        add("facility-size", f"facility sides must be positive, got {fac.len_x} x {fac.len_y}")
    if inst.periods < 1:
        add("periods", f"period count must be >= 1, got {inst.periods}")
    if inst.delta < 2:
        add("delta", f"support point count must be >= 2, got {inst.delta}")
    if inst.zones.zone_count < 1:
        add("zone-count", "at least one zone is required")

    periods = set(inst.period_range)
    ids = [d.id for d in inst.departments]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        add("duplicate-department", f"department id {dup!r} appears more than once")
    known = set(ids)

    for d in inst.departments:
        if not d.area_by_period:
            add("no-active-period", f"department {d.id} is active in no period")
        if d.replaces is not None and d.replaces not in known:
            add("unknown-department", f"department {d.id} replaces unknown department {d.replaces!r}")
        for t in d.active_periods:
            if t not in periods:
                add("period-range", f"department {d.id} uses period {t} outside 1..{inst.periods}")
                continue
            a = d.area(t)
            lo = d.min_side_by_period[t]
            hi = d.max_side_by_period[t]
            for axis, mn, mx in zip(AXES, lo, hi):
                if not 0 < mn <= mx:
                    add("side-bounds", f"department {d.id} period {t}: {axis} side bounds [{mn}, {mx}] are not 0 < min <= max")
                if mx > fac.length(axis):
                    add("side-exceeds-facility", f"department {d.id} period {t}: max {axis} side {mx} exceeds facility length {fac.length(axis)}")
            if not lo[0] * lo[1] <= a <= hi[0] * hi[1] or a <= 0:
                add("area-unachievable", f"department {d.id} period {t}: area {a} not achievable within side bounds {lo}..{hi}")

    for rec in inst.flows:
        where = f"flow {rec.src}->{rec.dst} period {rec.period}"
        if rec.flow < 0 or rec.unit_cost < 0:
            add("flow-negative", f"{where}: flow and unit cost must be non-negative")
        for i in (rec.src, rec.dst):
            if i not in known:
                add("unknown-department", f"{where}: unknown department {i!r}")
            elif not inst.is_active(i, rec.period):
                add("flow-inactive", f"{where}: department {i} is not active in period {rec.period}")

    zones = set(inst.zones.zones)
    for label, table, check_key in (
        ("fixed_rearrange", inst.costs.fixed_rearrange, lambda key: key[0] in known),
        ("unit_rearrange", inst.costs.unit_rearrange, lambda key: key[0] in known),
        ("zone_boundary", inst.costs.zone_boundary, lambda key: key[0] in zones),
    ):
        for key, value in sorted(table.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
            if value < 0:
                add("cost-negative", f"{label}{list(key)}: negative cost {value}")
            if key[1] <= 1 or key[1] not in periods:
                add("cost-period", f"{label}{list(key)}: costs are defined only for periods 2..{inst.periods}")
            if not check_key(key):
                add("cost-index", f"{label}{list(key)}: unknown {'zone' if label == 'zone_boundary' else 'department'}")

    for t in sorted(periods):
        act = inst.active(t)
        if len(act) < inst.zones.zone_count:
            add("zone-count", f"zone count exceeds active departments in period {t} ({inst.zones.zone_count} > {len(act)})")
        total = sum(inst.department(i).area(t) for i in act)
        if total > fac.len_x * fac.len_y:
            add("area-exceeds-facility", f"period {t}: total department area {total} exceeds facility area {fac.len_x * fac.len_y}")

    zc = inst.zones
    for k, o in sorted(zc.pinned_orientation.items()):
        if k not in zones:
            add("pin-index", f"orientation pin on unknown zone {k}")
        if o not in AXES:
            add("pin-index", f"orientation pin on zone {k} must be 'x' or 'y', got {o!r}")
    for k, h, r, t in sorted(zc.pinned_precedence):
        if k not in zones or h not in zones or k == h or r not in AXES or t not in periods:
            add("pin-index", f"precedence pin {(k, h, r, t)} has invalid indices")
    for r, t in _precedence_cycles(zc.pinned_precedence):
        add("precedence-cycle", f"precedence cycle among pinned zones on axis {r} in period {t}")
    # the model allows exactly one precedence relation per zone pair and period
    per_pair: dict[tuple[int, int, int], int] = {}
    for k, h, r, t in zc.pinned_precedence:
        key = (min(k, h), max(k, h), t)
        per_pair[key] = per_pair.get(key, 0) + 1
    for (k, h, t), n in sorted(per_pair.items()):
        if n > 1:
            add("precedence-conflict", f"zones {k} and {h} carry {n} precedence pins in period {t}; at most one is allowed")
    seen: dict[tuple[str, int], int] = {}
    for i, k, t in sorted(zc.pinned_assignment):
        if i not in known or k not in zones or t not in periods or not inst.is_active(i, t):
            add("pin-index", f"assignment pin {(i, k, t)} has invalid indices")
        if (i, t) in seen and seen[i, t] != k:
            add("double-pin", f"department {i} pinned to zones {seen[i, t]} and {k} in period {t}")
        seen[i, t] = k
    return out


# --------------------------------------------------------------------------
# parsing and serialization

_NUM = {"type": "number"}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_ID = {"type": "string", "minLength": 1, "pattern": r"^\S+$"}
_INT = {"type": "integer"}

INSTANCE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["facility", "periods", "zones", "departments"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "facility": {
            "type": "object",
            "required": ["len_x", "len_y"],
            "additionalProperties": False,
            "properties": {"len_x": _NUM, "len_y": _NUM},
        },
        "periods": _INT,
        "delta": _INT,
        "inherit_replacements": {"type": "boolean"},
        "zones": {
            "type": "object",
            "required": ["count"],
            "additionalProperties": False,
            "properties": {
                "count": _INT,
                "pinned_orientation": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["zone", "axis"],
                        "additionalProperties": False,
                        "properties": {"zone": _INT, "axis": {"enum": list(AXES)}},
                    },
                },
                "pinned_precedence": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["first", "second", "axis", "period"],
                        "additionalProperties": False,
                        "properties": {"first": _INT, "second": _INT, "axis": {"enum": list(AXES)}, "period": _INT},
                    },
                },
                "pinned_assignment": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["department", "zone", "period"],
                        "additionalProperties": False,
                        "properties": {"department": _ID, "zone": _INT, "period": _INT},
                    },
                },
            },
        },
        "departments": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "periods"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "replaces": {"anyOf": [_ID, {"type": "null"}]},
                    "periods": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["t", "area", "min_side", "max_side"],
                            "additionalProperties": False,
                            "properties": {"t": _INT, "area": _NUM, "min_side": _PAIR, "max_side": _PAIR},
                        },
                    },
                },
            },
        },
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "period", "flow", "unit_cost"],
                "additionalProperties": False,
                "properties": {"from": _ID, "to": _ID, "period": _INT, "flow": _NUM, "unit_cost": _NUM},
            },
        },
        "costs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": [key, "period", "value"],
                        "additionalProperties": False,
                        "properties": {key: _ID if key == "department" else _INT, "period": _INT, "value": _NUM},
                    },
                }
                for name, key in (
                    ("fixed_rearrange", "department"),
                    ("unit_rearrange", "department"),
                    ("zone_boundary", "zone"),
                )
            },
        },
    },
}


def _from_doc(doc: dict[str, Any]) -> Instance:
    departments = []
    for d in doc["departments"]:
        departments.append(
            Department(
                id=d["id"],
                area_by_period={p["t"]: float(p["area"]) for p in d["periods"]},
                min_side_by_period={p["t"]: (float(p["min_side"][0]), float(p["min_side"][1])) for p in d["periods"]},
                max_side_by_period={p["t"]: (float(p["max_side"][0]), float(p["max_side"][1])) for p in d["periods"]},
                replaces=d.get("replaces"),
            )
        )
    flows = tuple(
        FlowRecord(f["from"], f["to"], f["period"], float(f["flow"]), float(f["unit_cost"]))
        for f in doc.get("flows", [])
    )
    costs = doc.get("costs", {})
    z = doc["zones"]
    return Instance(
        facility=Facility(float(doc["facility"]["len_x"]), float(doc["facility"]["len_y"])),
        departments=tuple(departments),
        flows=flows,
        costs=CostParams(
            fixed_rearrange={(c["department"], c["period"]): float(c["value"]) for c in costs.get("fixed_rearrange", [])},
            unit_rearrange={(c["department"], c["period"]): float(c["value"]) for c in costs.get("unit_rearrange", [])},
            zone_boundary={(c["zone"], c["period"]): float(c["value"]) for c in costs.get("zone_boundary", [])},
        ),
        zones=ZoneConfig(
            zone_count=z["count"],
            pinned_orientation={p["zone"]: p["axis"] for p in z.get("pinned_orientation", [])},
            pinned_precedence=frozenset(
                (p["first"], p["second"], p["axis"], p["period"]) for p in z.get("pinned_precedence", [])
            ),
            pinned_assignment=frozenset(
                (p["department"], p["zone"], p["period"]) for p in z.get("pinned_assignment", [])
            ),
        ),
        periods=doc["periods"],
        delta=doc.get("delta", DEFAULT_DELTA),
        inherit_replacements=doc.get("inherit_replacements", False),
        name=doc.get("name", ""),
    )


def parse_instance(text: str, check: bool = True) -> Instance:
    """Parse a JSON instance document.

    Raises ``InstanceError`` on malformed JSON or schema violations (the
    message names the offending field and its path) and ``ValidationError``
    listing every failed invariant when ``check`` is true.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    errors = sorted(jsonschema.Draft7Validator(INSTANCE_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InstanceError(f"schema violation at {where}: {err.message}")
    inst = _from_doc(doc)
    if check:
        problems = validate(inst)
        if problems:
            raise ValidationError(problems)
    return inst


def load_instance(path: str | Path, check: bool = True) -> Instance:
    inst = parse_instance(Path(path).read_text(encoding="utf-8"), check=check)
    if not inst.name:
        object.__setattr__(inst, "name", Path(path).stem)
    return inst


def _num(x: float) -> float | int:
    return int(x) if float(x).is_integer() and math.isfinite(x) else x


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    zc = inst.zones
    doc: dict[str, Any] = {}
    if inst.name:
        doc["name"] = inst.name
    doc["facility"] = {"len_x": _num(inst.facility.len_x), "len_y": _num(inst.facility.len_y)}
    doc["periods"] = inst.periods
    doc["delta"] = inst.delta
    if inst.inherit_replacements:
        doc["inherit_replacements"] = True
    doc["zones"] = {
        "count": zc.zone_count,
        "pinned_orientation": [{"zone": k, "axis": a} for k, a in sorted(zc.pinned_orientation.items())],
        "pinned_precedence": [
            {"first": k, "second": h, "axis": r, "period": t} for k, h, r, t in sorted(zc.pinned_precedence)
        ],
        "pinned_assignment": [
            {"department": i, "zone": k, "period": t} for i, k, t in sorted(zc.pinned_assignment)
        ],
    }
    doc["departments"] = []
    for d in inst.departments:
        entry: dict[str, Any] = {"id": d.id}
        if d.replaces is not None:
            entry["replaces"] = d.replaces
        entry["periods"] = [
            {
                "t": t,
                "area": _num(d.area(t)),
                "min_side": [_num(v) for v in d.min_side_by_period[t]],
                "max_side": [_num(v) for v in d.max_side_by_period[t]],
            }
            for t in d.active_periods
        ]
        doc["departments"].append(entry)
    doc["flows"] = [
        {"from": f.src, "to": f.dst, "period": f.period, "flow": _num(f.flow), "unit_cost": _num(f.unit_cost)}
        for f in inst.flows
    ]
    c = inst.costs
    doc["costs"] = {
        "fixed_rearrange": [{"department": i, "period": t, "value": _num(v)} for (i, t), v in c.fixed_rearrange.items()],
        "unit_rearrange": [{"department": i, "period": t, "value": _num(v)} for (i, t), v in c.unit_rearrange.items()],
        "zone_boundary": [{"zone": k, "period": t, "value": _num(v)} for (k, t), v in c.zone_boundary.items()],
    }
    return doc


def serialize_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"

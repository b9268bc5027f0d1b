"""Solver-free verification of layouts.

``decode`` turns solver values into geometry, ``check`` re-tests every model
constraint geometrically, ``recompute_tc`` prices a layout from first
principles and ``oracle_solve`` finds the exact optimum of tiny instances by
enumerating every discrete structure.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator

from .backend import SolveLimits, SolveResult, SolverConfig, solve
from .instance import AXES, Instance, flow_pairs
from .model import ModelSpec, V, VarRef, build_full_model, make_support_points

log = logging.getLogger(__name__)

TOL = 1e-6
MOVE_TOL = 1e-6
ORACLE_MAX_DEPARTMENTS = 4
ORACLE_MAX_ZONES = 2
ORACLE_MAX_PERIODS = 2


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class CostBreakdown:
    material: float = 0.0
    fixed_relayout: float = 0.0
    variable_relayout: float = 0.0
    zone_boundary: float = 0.0

    @property
    def total(self) -> float:
        return self.material + self.fixed_relayout + self.variable_relayout + self.zone_boundary

    def as_dict(self) -> dict[str, float]:
        return {
            "material": self.material,
            "fixed_relayout": self.fixed_relayout,
            "variable_relayout": self.variable_relayout,
            "zone_boundary": self.zone_boundary,
            "total": self.total,
        }


@dataclass
class PeriodLayout:
    zone_bounds: dict[int, tuple[float, float, float, float]]  # (w, e, s, n)
    assignment: dict[str, int]
    ordering: dict[tuple[str, str, str], int]  # (i, j, axis) -> z
    center: dict[str, tuple[float, float]]
    half: dict[str, tuple[float, float]]
    io: dict[str, tuple[float, float]]


@dataclass
class LayoutSolution:
    orientation: dict[int, str]  # zone -> "x" | "y"; constant over periods
    periods: dict[int, PeriodLayout]
    costs: CostBreakdown = field(default_factory=CostBreakdown)
    objective: float | None = None  # solver objective, when the layout came from a solve
    status: str = ""

    @property
    def tc(self) -> float:
        return self.costs.total

    def zone_orientation(self, t: int) -> dict[int, str]:
        return dict(self.orientation)


@dataclass(frozen=True)
class Violation:
    code: str
    indices: tuple
    magnitude: float


# --------------------------------------------------------------------------
# decoding

def _value(values: dict[VarRef, float], ref: VarRef) -> float:
    try:
        return values[ref]
    except KeyError:
        raise DecodeError(f"solver returned no value for {ref.name}") from None


def decode(m: ModelSpec, r: SolveResult, inst: Instance) -> LayoutSolution:
    """Geometry of a solve; costs are recomputed, never copied from the solver."""
    if not r.has_solution:
        raise DecodeError(f"cannot decode a result with status {r.status!r}")
    vals = r.values
    zones = inst.zones.zones
    orientation = {k: ("y" if _value(vals, V("beta", k)) >= 0.5 else "x") for k in zones}
    periods = {}
    for t in inst.period_range:
        act = inst.active(t)
        bounds = {
            k: tuple(_value(vals, V("q", k, t, s)) for s in ("w", "e", "s", "n"))
            for k in zones
        }
        assignment = {}
        for i in act:
            chosen = [k for k in zones if _value(vals, V("b", i, k, t)) >= 0.5]
            if len(chosen) != 1:
                raise DecodeError(f"department {i} period {t}: rounded assignment hits {len(chosen)} zones")
            assignment[i] = chosen[0]
        ordering = {
            (i, j, ax): int(_value(vals, V("z", i, j, t, ax)) >= 0.5)
            for i in act for j in act if i != j for ax in AXES
        }
        center = {i: (_value(vals, V("c", i, t, "x")), _value(vals, V("c", i, t, "y"))) for i in act}
        half = {i: (_value(vals, V("l", i, t, "x")), _value(vals, V("l", i, t, "y"))) for i in act}
        io = {i: (_value(vals, V("g", i, t, "x")), _value(vals, V("g", i, t, "y"))) for i in act}
        periods[t] = PeriodLayout(bounds, assignment, ordering, center, half, io)
    sol = LayoutSolution(orientation, periods, objective=r.objective, status=r.status)
    sol.costs = recompute_tc(sol, inst)
    return sol


# --------------------------------------------------------------------------
# pricing

def recompute_tc(sol: LayoutSolution, inst: Instance) -> CostBreakdown:
    material = fixed = variable = boundary = 0.0
    for t in inst.period_range:
        per = sol.periods[t]
        for i, j, w in flow_pairs(inst, t):
            gi, gj = per.io[i], per.io[j]
            material += w * (abs(gi[0] - gj[0]) + abs(gi[1] - gj[1]))
        if t == 1:
            continue
        prev = sol.periods[t - 1]
        for i in inst.active(t):
            p = inst.predecessor(i, t)
            if p is None:
                continue
            dc = [abs(a - b) for a, b in zip(per.center[i], prev.center[p])]
            dl = [abs(a - b) for a, b in zip(per.half[i], prev.half[p])]
            if max(dc + dl) > MOVE_TOL:
                fixed += inst.costs.fixed(i, t)
            variable += inst.costs.unit(i, t) * sum(dc)
        for k in inst.zones.zones:
            moved = sum(abs(a - b) > MOVE_TOL for a, b in zip(per.zone_bounds[k], prev.zone_bounds[k]))
            boundary += inst.costs.boundary(k, t) * moved
    return CostBreakdown(material, fixed, variable, boundary)


# --------------------------------------------------------------------------
# feasibility

def check(sol: LayoutSolution, inst: Instance, tol: float = TOL) -> list[Violation]:
    """Every broken layout invariant, as violations larger than ``tol``."""
    out: list[Violation] = []

    def breach(code: str, idx: tuple, amount: float) -> None:
        if amount > tol:
            out.append(Violation(code, idx, amount))

    L = (inst.facility.len_x, inst.facility.len_y)
    zones = inst.zones.zones
    pts = make_support_points(inst)
    zc = inst.zones

    for k in zones:
        if sol.orientation.get(k) not in AXES:
            out.append(Violation("orientation", (k,), 1.0))
    for k, axis in zc.pinned_orientation.items():
        if sol.orientation.get(k) != axis:
            out.append(Violation("pin-orientation", (k,), 1.0))

    for t in inst.period_range:
        if t not in sol.periods:
            out.append(Violation("missing-period", (t,), 1.0))
            continue
        per = sol.periods[t]
        act = inst.active(t)
        qb = per.zone_bounds

        for k in zones:
            w, e, s, n = qb[k]
            breach("zone-bounds", (k, t, "we"), w - e)
            breach("zone-bounds", (k, t, "sn"), s - n)
            breach("zone-facility", (k, t, "w"), -w)
            breach("zone-facility", (k, t, "s"), -s)
            breach("zone-facility", (k, t, "e"), e - L[0])
            breach("zone-facility", (k, t, "n"), n - L[1])
        for k, h in itertools.combinations(zones, 2):
            (wk, ek, sk, nk), (wh, eh, sh, nh) = qb[k], qb[h]
            # separated along at least one axis
            gap = min(ek - wh, eh - wk, nk - sh, nh - sk)
            breach("zone-overlap", (k, h, t), gap)
        for k, h, r, tt in zc.pinned_precedence:
            if tt == t:
                amount = qb[k][1] - qb[h][0] if r == "x" else qb[k][3] - qb[h][2]
                breach("pin-precedence", (k, h, r, t), amount)

        members: dict[int, list[str]] = {k: [] for k in zones}
        for i in act:
            k = per.assignment.get(i)
            if k not in members:
                out.append(Violation("assignment", (i, t), 1.0))
                continue
            members[k].append(i)
        for i, k, tt in zc.pinned_assignment:
            if tt == t and per.assignment.get(i) != k:
                out.append(Violation("pin-assignment", (i, k, t), 1.0))
        for k in zones:
            if not members[k]:
                out.append(Violation("zone-empty", (k, t), 1.0))

        for i in act:
            if i not in per.center or i not in per.half or i not in per.io:
                out.append(Violation("missing-department", (i, t), 1.0))
                continue
            (cx, cy), (lx, ly), (gx, gy) = per.center[i], per.half[i], per.io[i]
            dep = inst.department(i)
            for ax, c, hl in (("x", cx, lx), ("y", cy, ly)):
                breach("side-length", (i, t, ax), dep.min_side(t, ax) - 2 * hl)
                breach("side-length", (i, t, ax), 2 * hl - dep.max_side(t, ax))
            allowance = pts.worst_area_ratio(i, t)
            breach("area", (i, t), dep.area(t) * allowance - 4 * lx * ly)
            k = per.assignment.get(i)
            if k in members:
                w, e, s, n = qb[k]
                breach("dept-outside-zone", (i, k, t, "w"), w - (cx - lx))
                breach("dept-outside-zone", (i, k, t, "e"), (cx + lx) - e)
                breach("dept-outside-zone", (i, k, t, "s"), s - (cy - ly))
                breach("dept-outside-zone", (i, k, t, "n"), (cy + ly) - n)
                if sol.orientation.get(k) == "x":
                    breach("io-centering", (i, t, "x"), abs(gx - cx))
                else:
                    breach("io-centering", (i, t, "y"), abs(gy - cy))
            breach("io-outside", (i, t, "x"), abs(gx - cx) - lx)
            breach("io-outside", (i, t, "y"), abs(gy - cy) - ly)

        for k in zones:
            axis = sol.orientation.get(k)
            if axis not in AXES:
                continue
            a = AXES.index(axis)
            for i, j in itertools.combinations(members[k], 2):
                if i not in per.center or j not in per.center:
                    continue
                ci, cj = per.center[i][a], per.center[j][a]
                li, lj = per.half[i][a], per.half[j][a]
                overlap = min(ci + li, cj + lj) - max(ci - li, cj - lj)
                breach("intra-zone-overlap", (i, j, k, t), overlap)
                zij = per.ordering.get((i, j, axis), 0)
                zji = per.ordering.get((j, i, axis), 0)
                if zij + zji != 1:
                    out.append(Violation("ordering-activation", (i, j, t, axis), 1.0))
        for (i, j, ax), z in per.ordering.items():
            if z and i in per.center and j in per.center:
                a = AXES.index(ax)
                if per.ordering.get((j, i, ax), 0):
                    out.append(Violation("ordering-activation", (i, j, t, ax), 1.0))
                amount = (per.center[i][a] + per.half[i][a]) - (per.center[j][a] - per.half[j][a])
                breach("ordering", (i, j, t, ax), amount)
    return out


# --------------------------------------------------------------------------
# serialization

def _r(x: float) -> float:
    y = round(float(x), 9)
    return 0.0 if y == 0 else y


def solution_to_dict(sol: LayoutSolution, inst: Instance) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "instance": inst.name,
        "facility": {"len_x": inst.facility.len_x, "len_y": inst.facility.len_y},
        "status": sol.status,
        "objective": None if sol.objective is None else _r(sol.objective),
        "costs": {k: _r(v) for k, v in sol.costs.as_dict().items()},
        "periods": [],
    }
    for t in sorted(sol.periods):
        per = sol.periods[t]
        doc["periods"].append({
            "t": t,
            "zones": [
                {"zone": k, "orientation": sol.orientation[k],
                 "w": _r(w), "e": _r(e), "s": _r(s), "n": _r(n)}
                for k, (w, e, s, n) in sorted(per.zone_bounds.items())
            ],
            "departments": [
                {
                    "id": i,
                    "replaces": inst.department(i).replaces,
                    "zone": per.assignment[i],
                    "center": [_r(v) for v in per.center[i]],
                    "half": [_r(v) for v in per.half[i]],
                    "io": [_r(v) for v in per.io[i]],
                }
                for i in inst.active(t)
            ],
            "ordering": [[i, j, ax] for (i, j, ax), z in sorted(per.ordering.items()) if z],
        })
    return doc


def serialize_solution(sol: LayoutSolution, inst: Instance) -> str:
    return json.dumps(solution_to_dict(sol, inst), indent=2) + "\n"


def solution_from_dict(doc: dict[str, Any]) -> LayoutSolution:
    orientation: dict[int, str] = {}
    periods = {}
    for per in doc["periods"]:
        t = per["t"]
        for z in per["zones"]:
            orientation[z["zone"]] = z["orientation"]
        ids = [d["id"] for d in per["departments"]]
        ones = {tuple(e) for e in per.get("ordering", [])}
        periods[t] = PeriodLayout(
            zone_bounds={z["zone"]: (z["w"], z["e"], z["s"], z["n"]) for z in per["zones"]},
            assignment={d["id"]: d["zone"] for d in per["departments"]},
            ordering={(i, j, ax): int((i, j, ax) in ones) for i in ids for j in ids if i != j for ax in AXES},
            center={d["id"]: tuple(d["center"]) for d in per["departments"]},
            half={d["id"]: tuple(d["half"]) for d in per["departments"]},
            io={d["id"]: tuple(d["io"]) for d in per["departments"]},
        )
    costs = doc.get("costs", {})
    return LayoutSolution(
        orientation,
        periods,
        CostBreakdown(costs.get("material", 0.0), costs.get("fixed_relayout", 0.0),
                      costs.get("variable_relayout", 0.0), costs.get("zone_boundary", 0.0)),
        doc.get("objective"),
        doc.get("status", ""),
    )


# --------------------------------------------------------------------------
# exhaustive oracle

def _surjections(items: tuple[str, ...], zones: tuple[int, ...], pinned: dict[str, int]) -> Iterator[dict[str, int]]:
    for combo in itertools.product(zones, repeat=len(items)):
        if set(combo) != set(zones):
            continue
        a = dict(zip(items, combo))
        if all(a[i] == k for i, k in pinned.items()):
            yield a


def _period_structures(inst: Instance, t: int, beta: dict[int, str]) -> Iterator[dict[VarRef, float]]:
    zc = inst.zones
    zones = zc.zones
    act = inst.active(t)
    pairs = list(itertools.combinations(zones, 2))
    # exactly one precedence relation per zone pair
    options = []
    for k, h in pairs:
        opts = [(k, h, "x"), (h, k, "x"), (k, h, "y"), (h, k, "y")]
        pinned = [(a, b, r) for a, b, r, tt in zc.pinned_precedence if tt == t and {a, b} == {k, h}]
        options.append(pinned or opts)
    pinned_b = {i: k for i, k, tt in zc.pinned_assignment if tt == t}
    for prec in itertools.product(*options):
        gamma = {V("gamma", k, h, t, r): 0.0 for k in zones for h in zones if k != h for r in AXES}
        for k, h, r in prec:
            gamma[V("gamma", k, h, t, r)] = 1.0
        for assign in _surjections(act, zones, pinned_b):
            members = {k: [i for i in act if assign[i] == k] for k in zones}
            for orders in itertools.product(*(itertools.permutations(members[k]) for k in zones)):
                fix = dict(gamma)
                for i in act:
                    for k in zones:
                        fix[V("b", i, k, t)] = 1.0 if assign[i] == k else 0.0
                    for j in act:
                        if i != j:
                            for r in AXES:
                                fix[V("z", i, j, t, r)] = 0.0
                for k, order in zip(zones, orders):
                    r = beta[k]
                    for a, i in enumerate(order):
                        for j in order[a + 1:]:
                            fix[V("z", i, j, t, r)] = 1.0
                yield fix


def oracle_structures(inst: Instance) -> Iterator[dict[VarRef, float]]:
    """Every discrete structure (beta, gamma, b, z) in a fixed lexicographic order."""
    zones = inst.zones.zones
    choices = [[inst.zones.pinned_orientation[k]] if k in inst.zones.pinned_orientation else ["x", "y"]
               for k in zones]
    for combo in itertools.product(*choices):
        beta = dict(zip(zones, combo))
        base = {V("beta", k): 0.0 if beta[k] == "x" else 1.0 for k in zones}
        per_period = [list(_period_structures(inst, t, beta)) for t in inst.period_range]
        for parts in itertools.product(*per_period):
            fix = dict(base)
            for p in parts:
                fix.update(p)
            yield fix


def oracle_solve(inst: Instance, config: SolverConfig | None = None,
                 max_structures: int | None = None) -> LayoutSolution:
    """Exact optimum of a tiny instance by enumerating discrete structures.

    For each structure the remaining model (continuous geometry plus the
    rearrangement indicators v and o) is solved exactly by the backend.
    """
    n_dept = max(len(inst.active(t)) for t in inst.period_range)
    if (n_dept > ORACLE_MAX_DEPARTMENTS or inst.zones.zone_count > ORACLE_MAX_ZONES
            or inst.periods > ORACLE_MAX_PERIODS):
        raise ValueError(
            f"instance too large for enumeration ({n_dept} departments, {inst.zones.zone_count} zones, "
            f"{inst.periods} periods; limits {ORACLE_MAX_DEPARTMENTS}/{ORACLE_MAX_ZONES}/{ORACLE_MAX_PERIODS})"
        )
    full = build_full_model(inst)
    best: LayoutSolution | None = None
    count = 0
    for fix in oracle_structures(inst):
        count += 1
        if max_structures is not None and count > max_structures:
            raise ValueError(f"more than {max_structures} structures to enumerate")
        # skip structures contradicting designer pins (the enumeration honours them already)
        if any(full.fixings.get(ref, val) != val for ref, val in fix.items()):
            continue
        m = full.with_fixings(fix)
        res = solve(m, SolveLimits(gap_limit=1e-9), config)
        if res.status == "infeasible":
            continue
        if res.status != "optimal":
            raise RuntimeError(f"oracle sub-solve ended with status {res.status}: {res.diagnostics[-500:]}")
        sol = decode(m, res, inst)
        if best is None or sol.tc < best.tc - 1e-9 * max(1.0, abs(best.tc)):
            best = sol
    log.info("oracle enumerated %d structures for %s", count, inst.name or "<instance>")
    if best is None:
        raise RuntimeError("no feasible structure found")
    return best

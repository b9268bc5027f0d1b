"""Solver-agnostic MILP for the zone-based dynamic facility layout problem.

Variable kinds and their index tuples::

    beta   (k,)           zone orientation, 0 = departments along x, 1 = along y
    gamma  (k, h, t, r)   zone k precedes zone h on axis r in period t
    z      (i, j, t, r)   department i precedes department j on axis r
    b      (i, k, t)      department i assigned to zone k
    l      (i, t, r)      half side length
    c      (i, t, r)      centre coordinate
    g      (i, t, r)      I/O point coordinate
    d      (i, j, t, r)   I/O distance, one per flow pair (i before j)
    u      (i, t, r)      centre displacement since t-1
    v      (i, t)         department rearranged since t-1
    q      (k, t, s)      zone bound, s in e/w/s/n
    o      (k, t, s)      zone bound moved since t-1

Every absolute value is split into two linear rows.  Big-M constants are the
facility side length along the relevant axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .instance import AXES, SIDES, Instance, ValidationError, flow_pairs, validate

if TYPE_CHECKING:
    from .evaluate import LayoutSolution
    from .vns import VariableSet

KINDS = ("beta", "gamma", "z", "b", "l", "c", "g", "d", "u", "v", "q", "o")
BINARY_KINDS = frozenset({"beta", "gamma", "z", "b", "v", "o"})
SIDE_AXIS = {"e": "x", "w": "x", "s": "y", "n": "y"}


@dataclass(frozen=True)
class VarRef:
    """A model variable.  Identity is ``(kind, indices)``; bounds ride along."""

    kind: str
    indices: tuple
    binary: bool = field(default=False, compare=False)
    lo: float = field(default=0.0, compare=False)
    hi: float = field(default=float("inf"), compare=False)

    @property
    def name(self) -> str:
        return "_".join([self.kind, *map(str, self.indices)])

    def sort_key(self) -> tuple:
        return (self.kind, tuple(str(x) if isinstance(x, str) else (x,) for x in self.indices))


def V(kind: str, *indices) -> VarRef:
    """Lookup key for a variable (bounds are irrelevant for identity)."""
    return VarRef(kind, tuple(indices))


@dataclass(frozen=True)
class ConstraintRow:
    terms: tuple[tuple[VarRef, float], ...]
    sense: str  # "<=", ">=" or "="
    rhs: float
    tag: str

    def activity(self, values: dict[VarRef, float]) -> float:
        return sum(coef * values[ref] for ref, coef in self.terms)

    def violation(self, values: dict[VarRef, float]) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class ModelSpec:
    variables: list[VarRef]
    objective: list[tuple[VarRef, float]]
    constraints: list[ConstraintRow]
    fixings: dict[VarRef, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index = {v: n for n, v in enumerate(self.variables)}

    def __contains__(self, ref: VarRef) -> bool:
        return ref in self._index

    def var(self, ref: VarRef) -> VarRef:
        """The registered variable (with bounds) for a lookup key."""
        return self.variables[self._index[ref]]

    def column(self, ref: VarRef) -> int:
        return self._index[ref]

    def bounds(self, ref: VarRef) -> tuple[float, float]:
        if ref in self.fixings:
            x = self.fixings[ref]
            return x, x
        v = self.var(ref)
        return v.lo, v.hi

    def objective_value(self, values: dict[VarRef, float]) -> float:
        return sum(coef * values[ref] for ref, coef in self.objective)

    def with_fixings(self, extra: dict[VarRef, float]) -> ModelSpec:
        fix = dict(self.fixings)
        for ref, val in extra.items():
            if ref not in self._index:
                raise KeyError(f"cannot fix unknown variable {ref.name}")
            fix[ref] = val
        return ModelSpec(self.variables, self.objective, self.constraints, fix)


@dataclass(frozen=True)
class SupportPoints:
    points: dict[tuple[str, int], tuple[float, ...]]

    def worst_area_ratio(self, i: str, t: int) -> float:
        """Smallest realized-area / required-area ratio the tangent rows admit.

        Adjacent tangents at half-widths x1 < x2 meet where the area falls to
        4*x1*x2/(x1+x2)**2 of the requirement; that is the deepest point of the
        polyhedral envelope inside the side bounds.
        """
        pts = self.points[i, t]
        return min(
            (4 * a * b / (a + b) ** 2 for a, b in zip(pts, pts[1:])),
            default=1.0,
        )


def make_support_points(inst: Instance) -> SupportPoints:
    """Evenly spaced half-width tangent points, endpoints included."""
    n = inst.delta
    if n < 2:
        raise ValueError(f"need at least 2 support points, got {n}")
    pts = {}
    for d in inst.departments:
        for t in d.active_periods:
            lo = d.min_side(t, "x") / 2
            hi = d.max_side(t, "x") / 2
            pts[d.id, t] = tuple(lo + (hi - lo) * p / (n - 1) for p in range(n))
    return SupportPoints(pts)


def area_tangent(area: float, xbar: float) -> tuple[float, float, float]:
    """Coefficients ``(cx, cy, rhs)`` of ``cx*l_x + cy*l_y >= rhs``.

    The row is tangent to ``(2 l_x)(2 l_y) = area`` at ``l_x = xbar``.
    """
    return area, 4 * xbar * xbar, 2 * area * xbar


def big_m(inst: Instance, context: str) -> float:
    """Big-M for a constraint family: an axis ("x"/"y") or a zone side (e/w/s/n)."""
    axis = SIDE_AXIS.get(context, context)
    if axis not in AXES:
        raise ValueError(f"unknown big-M context {context!r}")
    return inst.facility.length(axis)


class _Builder:
    def __init__(self) -> None:
        self.vars: dict[VarRef, VarRef] = {}
        self.rows: list[ConstraintRow] = []
        self.obj: dict[VarRef, float] = {}

    def add_var(self, kind: str, idx: tuple, lo: float = 0.0, hi: float = 1.0) -> VarRef:
        ref = VarRef(kind, idx, kind in BINARY_KINDS, lo, hi)
        if ref in self.vars:
            raise ValueError(f"duplicate variable {ref.name}")
        self.vars[ref] = ref
        return ref

    def row(self, terms: Iterable[tuple[VarRef, float]], sense: str, rhs: float, tag: str) -> None:
        merged: dict[VarRef, float] = {}
        for ref, coef in terms:
            if ref not in self.vars:
                raise KeyError(f"row {tag} references unknown variable {ref.name}")
            merged[ref] = merged.get(ref, 0.0) + coef
        self.rows.append(ConstraintRow(tuple((r, c) for r, c in merged.items() if c != 0), sense, rhs, tag))


def build_full_model(inst: Instance) -> ModelSpec:
    """The complete MILP with linearized absolute values and area tangents."""
    problems = validate(inst)
    if problems:
        raise ValidationError(problems)

    B = _Builder()
    L = {"x": inst.facility.len_x, "y": inst.facility.len_y}
    zones = inst.zones.zones
    T = inst.period_range
    pts = make_support_points(inst)
    pairs = {t: flow_pairs(inst, t) for t in T}

    # -- variables
    for k in zones:
        B.add_var("beta", (k,))
    for t in T:
        for k in zones:
            for h in zones:
                if k != h:
                    for r in AXES:
                        B.add_var("gamma", (k, h, t, r))
        act = inst.active(t)
        for i in act:
            for j in act:
                if i != j:
                    for r in AXES:
                        B.add_var("z", (i, j, t, r))
        for i in act:
            for k in zones:
                B.add_var("b", (i, k, t))
        for i in act:
            d = inst.department(i)
            for r in AXES:
                B.add_var("l", (i, t, r), d.min_side(t, r) / 2, d.max_side(t, r) / 2)
                B.add_var("c", (i, t, r), 0.0, L[r])
                B.add_var("g", (i, t, r), 0.0, L[r])
        for i, j, _ in pairs[t]:
            for r in AXES:
                B.add_var("d", (i, j, t, r), 0.0, L[r])
        for i in act:
            if inst.predecessor(i, t) is not None:
                B.add_var("v", (i, t))
                for r in AXES:
                    B.add_var("u", (i, t, r), 0.0, L[r])
        for k in zones:
            for s in SIDES:
                B.add_var("q", (k, t, s), 0.0, L[SIDE_AXIS[s]])
                if t > 1:
                    B.add_var("o", (k, t, s))

    # -- objective
    for t in T:
        for i, j, w in pairs[t]:
            for r in AXES:
                B.obj[V("d", i, j, t, r)] = w
        for i in inst.active(t):
            if inst.predecessor(i, t) is None:
                continue
            B.obj[V("v", i, t)] = inst.costs.fixed(i, t)
            for r in AXES:
                B.obj[V("u", i, t, r)] = inst.costs.unit(i, t)
        if t > 1:
            for k in zones:
                for s in SIDES:
                    B.obj[V("o", k, t, s)] = inst.costs.boundary(k, t)

    # -- zone layout
    for t in T:
        for k in zones:
            for h in zones:
                if k < h:
                    B.row(
                        [(V("gamma", k, h, t, "x"), 1), (V("gamma", h, k, t, "x"), 1),
                         (V("gamma", k, h, t, "y"), 1), (V("gamma", h, k, t, "y"), 1)],
                        "=", 1, "zone-precedence",
                    )
        for k in zones:
            B.row([(V("q", k, t, "w"), 1), (V("q", k, t, "e"), -1)], "<=", 0, "zone-width")
            for h in zones:
                if h != k:
                    B.row([(V("q", k, t, "e"), 1), (V("q", h, t, "w"), -1), (V("gamma", k, h, t, "x"), L["x"])],
                          "<=", L["x"], "zone-order-x")
            B.row([(V("q", k, t, "s"), 1), (V("q", k, t, "n"), -1)], "<=", 0, "zone-height")
            for h in zones:
                if h != k:
                    B.row([(V("q", k, t, "n"), 1), (V("q", h, t, "s"), -1), (V("gamma", k, h, t, "y"), L["y"])],
                          "<=", L["y"], "zone-order-y")
            B.row([(V("q", k, t, "e"), 1)], "<=", L["x"], "zone-east")
            B.row([(V("q", k, t, "n"), 1)], "<=", L["y"], "zone-north")
            B.row([(V("q", k, t, "w"), 1)], ">=", 0, "zone-west")
            B.row([(V("q", k, t, "s"), 1)], ">=", 0, "zone-south")

    # -- departments inside zones
    for t in T:
        act = inst.active(t)
        for k in zones:
            for a, i in enumerate(act):
                for j in act[a + 1:]:
                    B.row([(V("z", i, j, t, "x"), 1), (V("z", j, i, t, "x"), 1),
                           (V("b", i, k, t), -1), (V("b", j, k, t), -1), (V("beta", k), 1)],
                          ">=", -1, "activate-x")
                    B.row([(V("z", i, j, t, "y"), 1), (V("z", j, i, t, "y"), 1),
                           (V("b", i, k, t), -1), (V("b", j, k, t), -1), (V("beta", k), -1)],
                          ">=", -2, "activate-y")
        for a, i in enumerate(act):
            for j in act[a + 1:]:
                for r in AXES:
                    B.row([(V("z", i, j, t, r), 1), (V("z", j, i, t, r), 1)], "<=", 1, "order-once")
        for i in act:
            for j in act:
                if i != j:
                    for r in AXES:
                        B.row([(V("c", i, t, r), 1), (V("l", i, t, r), 1), (V("c", j, t, r), -1),
                               (V("l", j, t, r), 1), (V("z", i, j, t, r), L[r])],
                              "<=", L[r], "separation")
        for i in act:
            B.row([(V("b", i, k, t), 1) for k in zones], "=", 1, "assign-one")
        for k in zones:
            B.row([(V("b", i, k, t), 1) for i in act], ">=", 1, "zone-nonempty")
        for k in zones:
            for i in act:
                bk = V("b", i, k, t)
                B.row([(V("c", i, t, "x"), 1), (V("l", i, t, "x"), 1), (V("q", k, t, "e"), -1), (bk, L["x"])],
                      "<=", L["x"], "in-zone-east")
                B.row([(V("c", i, t, "x"), 1), (V("l", i, t, "x"), -1), (V("q", k, t, "w"), -1), (bk, -L["x"])],
                      ">=", -L["x"], "in-zone-west")
                B.row([(V("c", i, t, "y"), 1), (V("l", i, t, "y"), 1), (V("q", k, t, "n"), -1), (bk, L["y"])],
                      "<=", L["y"], "in-zone-north")
                B.row([(V("c", i, t, "y"), 1), (V("l", i, t, "y"), -1), (V("q", k, t, "s"), -1), (bk, -L["y"])],
                      ">=", -L["y"], "in-zone-south")

    # -- zone boundary changes
    for t in T:
        if t == 1:
            continue
        for k in zones:
            for s in SIDES:
                m = big_m(inst, s)
                o, now, before = V("o", k, t, s), V("q", k, t, s), V("q", k, t - 1, s)
                B.row([(o, m), (now, -1), (before, 1)], ">=", 0, "side-move-up")
                B.row([(o, m), (now, 1), (before, -1)], ">=", 0, "side-move-down")

    # -- I/O points and distances
    for t in T:
        for i, j, _ in pairs[t]:
            for r in AXES:
                dv = V("d", i, j, t, r)
                B.row([(dv, 1), (V("g", i, t, r), -1), (V("g", j, t, r), 1)], ">=", 0, "dist-pos")
                B.row([(dv, 1), (V("g", i, t, r), 1), (V("g", j, t, r), -1)], ">=", 0, "dist-neg")
        for i in inst.active(t):
            for r in AXES:
                B.row([(V("g", i, t, r), 1), (V("c", i, t, r), -1), (V("l", i, t, r), 1)], ">=", 0, "io-low")
                B.row([(V("g", i, t, r), 1), (V("c", i, t, r), -1), (V("l", i, t, r), -1)], "<=", 0, "io-high")
            for k in zones:
                bk, beta = V("b", i, k, t), V("beta", k)
                gx, cx = V("g", i, t, "x"), V("c", i, t, "x")
                gy, cy = V("g", i, t, "y"), V("c", i, t, "y")
                # g_x = c_x when i sits in x-oriented zone k (b=1, beta=0)
                B.row([(gx, 1), (cx, -1), (bk, -L["x"]), (beta, L["x"])], ">=", -L["x"], "io-centre-x")
                B.row([(gx, 1), (cx, -1), (bk, L["x"]), (beta, -L["x"])], "<=", L["x"], "io-centre-x")
                # g_y = c_y when i sits in y-oriented zone k (b=1, beta=1)
                B.row([(gy, 1), (cy, -1), (bk, -L["y"]), (beta, -L["y"])], ">=", -2 * L["y"], "io-centre-y")
                B.row([(gy, 1), (cy, -1), (bk, L["y"]), (beta, L["y"])], "<=", 2 * L["y"], "io-centre-y")

    # -- department rearrangement
    for t in T:
        for i in inst.active(t):
            p = inst.predecessor(i, t)
            if p is None:
                continue
            v = V("v", i, t)
            for r in AXES:
                m = big_m(inst, r)
                now_c, prev_c = V("c", i, t, r), V("c", p, t - 1, r)
                B.row([(v, m), (now_c, -1), (prev_c, 1)], ">=", 0, "centre-move-up")
                B.row([(v, m), (now_c, 1), (prev_c, -1)], ">=", 0, "centre-move-down")
            for r in AXES:
                m = big_m(inst, r)
                now_l, prev_l = V("l", i, t, r), V("l", p, t - 1, r)
                B.row([(v, m), (now_l, -1), (prev_l, 1)], ">=", 0, "shape-move-up")
                B.row([(v, m), (now_l, 1), (prev_l, -1)], ">=", 0, "shape-move-down")
            for r in AXES:
                uu, now_c, prev_c = V("u", i, t, r), V("c", i, t, r), V("c", p, t - 1, r)
                B.row([(uu, 1), (now_c, -1), (prev_c, 1)], ">=", 0, "shift-up")
                B.row([(uu, 1), (now_c, 1), (prev_c, -1)], ">=", 0, "shift-down")

    # -- area outer approximation
    for t in T:
        for i in inst.active(t):
            a = inst.department(i).area(t)
            for xbar in pts.points[i, t]:
                cx, cy, rhs = area_tangent(a, xbar)
                B.row([(V("l", i, t, "x"), cx), (V("l", i, t, "y"), cy)], ">=", rhs, "area")

    variables = sorted(B.vars, key=VarRef.sort_key)
    objective = sorted(B.obj.items(), key=lambda kv: kv[0].sort_key())
    fixings = _pin_fixings(inst)
    return ModelSpec(variables, objective, B.rows, fixings)


def _pin_fixings(inst: Instance) -> dict[VarRef, float]:
    zc = inst.zones
    fix: dict[VarRef, float] = {}
    for k, axis in sorted(zc.pinned_orientation.items()):
        fix[V("beta", k)] = 0.0 if axis == "x" else 1.0
    for k, h, r, t in sorted(zc.pinned_precedence):
        fix[V("gamma", k, h, t, r)] = 1.0
    for i, k, t in sorted(zc.pinned_assignment):
        for kk in zc.zones:
            fix[V("b", i, kk, t)] = 1.0 if kk == k else 0.0
    return fix


def structural_values(sol: LayoutSolution) -> dict[VarRef, float]:
    """Values of z, b and l carried by a layout, keyed by variable."""
    out: dict[VarRef, float] = {}
    for t, per in sol.periods.items():
        for (i, j, r), val in per.ordering.items():
            out[V("z", i, j, t, r)] = float(val)
        for i, k in per.assignment.items():
            for kk in sol.orientation:
                out[V("b", i, kk, t)] = 1.0 if kk == k else 0.0
        for i, (lx, ly) in per.half.items():
            out[V("l", i, t, "x")] = lx
            out[V("l", i, t, "y")] = ly
    return out


def build_restricted_model(inst: Instance, incumbent: LayoutSolution, free: VariableSet) -> ModelSpec:
    """Full model with every z, b, l outside ``free`` fixed to the incumbent."""
    full = build_full_model(inst)
    free_refs = set(free.refs())
    for ref in free_refs:
        if ref not in full:
            raise IndexError(f"free variable {ref.name} is not part of the instance")
    inc = structural_values(incumbent)
    fix = {}
    for ref in full.variables:
        if ref.kind in ("z", "b", "l") and ref not in free_refs:
            if ref not in inc:
                raise KeyError(f"incumbent carries no value for {ref.name}")
            val = inc[ref]
            if ref.kind == "l":
                # keep the fixed half length inside its bound despite solver round-off
                val = min(max(val, ref.lo), ref.hi)
            fix[ref] = val
    return full.with_fixings(fix)

from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from zdflp.backend import OPTIMAL, SolveLimits, solve
from zdflp.evaluate import decode
from zdflp.instance import Department, Facility, ValidationError, flow_pairs
from zdflp.model import (
    KINDS,
    V,
    area_tangent,
    big_m,
    build_full_model,
    build_restricted_model,
    make_support_points,
)
from zdflp.vns import SearchConfig, VariableSet, neighborhood, phase1
from helpers import fixture, random_instance, simple_instance


def one_department(min_x=2.0, max_x=6.0, delta=3):
    d = Department("1", {1: 4.0}, {1: (min_x, 1.0)}, {1: (max_x, 4.0)})
    return replace(simple_instance(1), departments=(d,), delta=delta)


def tags(m):
    return Counter(row.tag for row in m.constraints)


def test_support_points_even_spacing():
    pts = make_support_points(one_department(2.0, 6.0, 3))
    assert pts.points["1", 1] == pytest.approx((1.0, 2.0, 3.0))


def test_support_points_degenerate_range():
    pts = make_support_points(one_department(4.0, 4.0, 5))
    assert pts.points["1", 1] == (2.0,) * 5


def test_support_points_need_two():
    with pytest.raises(ValueError):
        make_support_points(one_department(delta=1))


def test_tangent_row_touches_square():
    cx, cy, rhs = area_tangent(4.0, 1.0)
    assert (cx, cy, rhs) == (4.0, 4.0, 8.0)
    assert cx * 1.0 + cy * 1.0 == rhs


def test_single_department_counts():
    inst = simple_instance(1)
    m = build_full_model(inst)
    # 1 beta + 1 b + 2 l + 2 c + 2 g + 4 q
    assert len(m.variables) == 12
    assert Counter(v.kind for v in m.variables) == {"beta": 1, "b": 1, "l": 2, "c": 2, "g": 2, "q": 4}
    t = tags(m)
    for tag in ("zone-precedence", "zone-order-x", "zone-order-y", "activate-x", "activate-y", "order-once", "separation", "side-move-up", "centre-move-up", "shape-move-up", "shift-up"):
        assert t[tag] == 0
    assert t["area"] == inst.delta


def test_two_department_ordering_rows():
    m = build_full_model(simple_instance(2))
    t = tags(m)
    assert t["activate-x"] == 1 and t["activate-y"] == 1
    assert t["separation"] == 4


def test_objective_weights_match_flow_pairs():
    inst = fixture("replacement")
    m = build_full_model(inst)
    obj = {ref: c for ref, c in m.objective}
    for t in inst.period_range:
        for i, j, w in flow_pairs(inst, t):
            assert obj[V("d", i, j, t, "x")] == w
            assert obj[V("d", i, j, t, "y")] == w
    assert obj[V("o", 1, 2, "e")] == 2.0
    assert obj[V("v", "1", 2)] == 4.0 and obj[V("u", "1", 2, "x")] == 1.0
    # the replacement department has no predecessor geometry
    assert V("v", "4", 2) not in m


def test_rearrangement_rows_only_for_continuing_departments():
    inst = fixture("replacement")
    t = tags(build_full_model(inst))
    # departments 1 and 2 continue into period 2; each gets 2 rows per axis
    assert t["centre-move-up"] == t["centre-move-down"] == 4
    assert t["shape-move-up"] == t["shift-down"] == 4
    assert t["side-move-up"] == 2 * 4


def test_inherited_replacement_links_geometry():
    inst = replace(fixture("replacement"), inherit_replacements=True)
    m = build_full_model(inst)
    assert V("v", "4", 2) in m
    row = next(r for r in m.constraints if r.tag == "centre-move-up" and V("v", "4", 2) in dict(r.terms))
    assert V("c", "3", 1, "x") in dict(row.terms)


def test_big_m_contexts():
    inst = replace(simple_instance(1), facility=Facility(10.0, 8.0))
    assert big_m(inst, "x") == 10 and big_m(inst, "e") == 10 and big_m(inst, "w") == 10
    assert big_m(inst, "n") == 8 and big_m(inst, "y") == 8 and big_m(inst, "s") == 8
    assert {big_m(simple_instance(1), c) for c in ("x", "y", "e", "w", "s", "n")} == {10.0}
    with pytest.raises(ValueError):
        big_m(inst, "z")


def test_variable_invariants():
    inst = fixture("four_dept_pinned")
    m = build_full_model(inst)
    longest = max(inst.facility.len_x, inst.facility.len_y)
    assert {v.kind for v in m.variables} <= set(KINDS)
    for v in m.variables:
        if v.binary:
            assert (v.lo, v.hi) == (0.0, 1.0)
        else:
            assert v.hi <= longest
    for ref in m.fixings:
        assert ref in m


def test_side_bounds_become_half_length_bounds():
    inst = fixture("two_zone_two_period")
    m = build_full_model(inst)
    d = inst.departments[0]
    for t in d.active_periods:
        for r in ("x", "y"):
            v = m.var(V("l", d.id, t, r))
            assert (v.lo, v.hi) == (d.min_side(t, r) / 2, d.max_side(t, r) / 2)


def test_pins_are_fixings():
    m = build_full_model(fixture("replacement"))
    assert m.fixings[V("beta", 1)] == 0.0 and m.fixings[V("beta", 2)] == 1.0
    assert m.fixings[V("gamma", 1, 2, 1, "x")] == 1.0


def test_build_is_deterministic():
    a = build_full_model(fixture("replacement"))
    b = build_full_model(fixture("replacement"))
    assert [v.name for v in a.variables] == [v.name for v in b.variables]
    assert a.constraints == b.constraints and a.objective == b.objective
    assert [v.sort_key() for v in a.variables] == sorted(v.sort_key() for v in a.variables)


def test_invalid_instance_refused():
    inst = replace(simple_instance(2), delta=1)
    with pytest.raises(ValidationError):
        build_full_model(inst)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5000), st.floats(0, 1), st.floats(0, 1), st.integers(0, 7))
def test_tangent_rows_never_cut_a_feasible_rectangle(seed, u, s, pick):
    inst = random_instance(seed, max_departments=4, max_periods=2)
    pairs = [(d, t) for d in inst.departments for t in d.active_periods]
    d, t = pairs[pick % len(pairs)]
    a = d.area(t)
    lo_x, hi_x = d.min_side(t, "x"), d.max_side(t, "x")
    lo_y, hi_y = d.min_side(t, "y"), d.max_side(t, "y")
    lo_x = max(lo_x, a / hi_y)
    w = lo_x + u * (hi_x - lo_x)
    h_lo = max(lo_y, a / w)
    h = h_lo + s * (hi_y - h_lo)
    assert w * h >= a * (1 - 1e-12)
    vals = {V("l", d.id, t, "x"): w / 2, V("l", d.id, t, "y"): h / 2}
    rows = [r for r in build_full_model(inst).constraints
            if r.tag == "area" and V("l", d.id, t, "x") in dict(r.terms)]
    assert len(rows) == inst.delta
    for r in rows:
        assert r.violation(vals) <= 1e-9


@pytest.fixture(scope="module")
def five_three():
    inst = simple_instance(5, zones=3, periods=3, side=12.0)
    return inst, phase1(inst, SearchConfig(kappa=1))


def free_counts(m):
    return Counter(v.kind for v in m.variables if v.kind in ("z", "b", "l") and v not in m.fixings)


def test_restricted_u1_counts(five_three):
    inst, inc = five_three
    m = build_restricted_model(inst, inc, neighborhood(1, "3", 2, inst))
    assert free_counts(m) == {"z": 16, "b": 3, "l": 2}


def test_restricted_all_free_matches_full(five_three):
    inst, inc = five_three
    everything = VariableSet(
        frozenset(v.indices for v in build_full_model(inst).variables if v.kind == "z"),
        frozenset(v.indices for v in build_full_model(inst).variables if v.kind == "b"),
        frozenset(v.indices for v in build_full_model(inst).variables if v.kind == "l"),
    )
    m = build_restricted_model(inst, inc, everything)
    assert m.fixings == build_full_model(inst).fixings


def test_restricted_empty_keeps_structure(five_three):
    inst, inc = five_three
    m = build_restricted_model(inst, inc, VariableSet())
    assert not free_counts(m)
    # only z, b, l are fixed by the restriction
    assert {ref.kind for ref in m.fixings} <= {"z", "b", "l", "beta", "gamma"}
    res = solve(m, SolveLimits(gap_limit=1e-9))
    assert res.status == OPTIMAL
    assert res.objective <= inc.tc + 1e-6 * max(1.0, inc.tc)
    sol = decode(m, res, inst)
    for t in inst.period_range:
        assert sol.periods[t].assignment == inc.periods[t].assignment
        assert sol.periods[t].ordering == inc.periods[t].ordering


def test_restricted_rejects_foreign_index(five_three):
    inst, inc = five_three
    with pytest.raises(IndexError):
        build_restricted_model(inst, inc, VariableSet(l_entries=frozenset({("9", 1, "x")})))

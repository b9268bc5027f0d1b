"""Shared, cached solves and instance generators for the test-suite."""

from __future__ import annotations

import random
import time
from functools import lru_cache

from zdflp import fixture_path, load_instance
from zdflp.backend import OPTIMAL, SolveLimits, solve
from zdflp.evaluate import decode, oracle_solve
from zdflp.instance import CostParams, Department, Facility, FlowRecord, Instance, ZoneConfig, validate
from zdflp.model import build_full_model
from zdflp.vns import SearchConfig, run_vns

TINY = (
    "four_dept_pinned",
    "one_dept",
    "replacement",
    "three_dept_two_period",
    "three_dept_two_zone",
    "two_dept",
    "two_zone_two_period",
)

# (label, solver objective, recomputed TC) for every optimal solve made through these helpers
OPTIMAL_SOLVES: list[tuple[str, float, float]] = []
# (label, trace) for every VNS run made through these helpers
VNS_RUNS: list[tuple[str, object]] = []
# wall seconds spent in exact and oracle solves of each fixture
SOLVE_SECONDS: dict[str, float] = {}


def record_optimal(label: str, res, sol) -> None:
    if res.status == OPTIMAL:
        OPTIMAL_SOLVES.append((label, res.objective, sol.tc))


@lru_cache(maxsize=None)
def fixture(name: str) -> Instance:
    return load_instance(fixture_path(name))


@lru_cache(maxsize=None)
def exact(name: str):
    inst = fixture(name)
    start = time.perf_counter()
    m = build_full_model(inst)
    res = solve(m, SolveLimits(gap_limit=1e-9))
    sol = decode(m, res, inst)
    SOLVE_SECONDS[f"exact {name}"] = time.perf_counter() - start
    record_optimal(f"exact {name}", res, sol)
    return m, res, sol


@lru_cache(maxsize=None)
def oracle(name: str):
    start = time.perf_counter()
    sol = oracle_solve(fixture(name))
    SOLVE_SECONDS[f"oracle {name}"] = time.perf_counter() - start
    OPTIMAL_SOLVES.append((f"oracle {name}", sol.objective, sol.tc))
    return sol


@lru_cache(maxsize=None)
def vns(name: str, seed: int, g_max: int = 5):
    best, trace = run_vns(fixture(name), SearchConfig(g_max=g_max, seed=seed))
    VNS_RUNS.append((f"{name} seed {seed}", trace))
    return best, trace


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def random_instance(seed: int, max_departments: int = 8, max_zones: int = 3, max_periods: int = 3) -> Instance:
    """A random valid instance.  Side ratios stay below 7 so the area
    envelope of the default 20 support points admits at most a 2% shortfall."""
    rng = random.Random(seed)
    periods = rng.randint(1, max_periods)
    n = rng.randint(1, max_departments)
    zones = rng.randint(1, min(max_zones, n))
    lx = float(rng.randint(8, 16))
    ly = float(rng.randint(6, 12))
    depts = []
    for d in range(n):
        area, lo, hi = {}, {}, {}
        for t in range(1, periods + 1):
            a = round(rng.uniform(2.0, 0.5 * lx * ly / n), 2)
            mn = round(rng.uniform(0.5, 1.5), 2)
            mx = (min(lx, round(mn * rng.uniform(3.0, 7.0), 2)), min(ly, round(mn * rng.uniform(3.0, 7.0), 2)))
            a = max(min(a, mx[0] * mx[1]), mn * mn)
            area[t], lo[t], hi[t] = a, (mn, mn), mx
        depts.append(Department(str(d + 1), area, lo, hi))
    flows = []
    for t in range(1, periods + 1):
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.6:
                    flows.append(FlowRecord(str(i + 1), str(j + 1), t, float(rng.randint(1, 9)), 1.0))
    fixed, unit, bnd = {}, {}, {}
    for t in range(2, periods + 1):
        for d in range(n):
            fixed[str(d + 1), t] = float(rng.randint(0, 10))
            unit[str(d + 1), t] = round(rng.uniform(0, 2), 2)
        for k in range(1, zones + 1):
            bnd[k, t] = float(rng.randint(0, 5))
    inst = Instance(Facility(lx, ly), tuple(depts), tuple(flows), CostParams(fixed, unit, bnd),
                    ZoneConfig(zones), periods, name=f"random-{seed}")
    problems = validate(inst)
    assert not problems, problems
    return inst


def simple_instance(n: int, zones: int = 1, periods: int = 1, side: float = 10.0, **kw) -> Instance:
    """``n`` identical 2x2 departments, active in every period, chained unit flows."""
    depts = tuple(
        Department(str(i), {t: 4.0 for t in range(1, periods + 1)},
                   {t: (1.0, 1.0) for t in range(1, periods + 1)},
                   {t: (4.0, 4.0) for t in range(1, periods + 1)})
        for i in range(1, n + 1)
    )
    flows = tuple(FlowRecord(str(i), str(i + 1), t, 1.0, 1.0)
                  for t in range(1, periods + 1) for i in range(1, n))
    return Instance(Facility(side, side), depts, flows, kw.pop("costs", CostParams()),
                    kw.pop("zone_config", ZoneConfig(zones)), periods, **kw)

"""MIP-VNS: fix-and-optimize variable neighbourhood search.

Phase I solves the full model until a few feasible solutions are found.
Phase II repeatedly frees the z/b/l variables of a random department-period
(and, in the wider neighbourhoods, a second department and/or period), fixes
every other z/b/l at the incumbent and re-solves the restricted model.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Iterator

from .backend import OPTIMAL, FEASIBLE, INFEASIBLE, SolveLimits, SolverConfig, solve
from .evaluate import LayoutSolution, check, decode
from .instance import AXES, Instance, ValidationError, validate
from .model import V, VarRef, build_full_model, build_restricted_model

log = logging.getLogger(__name__)

MAX_REDRAWS = 50


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class VariableSet:
    z_entries: frozenset[tuple[str, str, int, str]] = frozenset()
    b_entries: frozenset[tuple[str, int, int]] = frozenset()
    l_entries: frozenset[tuple[str, int, str]] = frozenset()

    def refs(self) -> Iterator[VarRef]:
        for idx in sorted(self.z_entries):
            yield V("z", *idx)
        for idx in sorted(self.b_entries):
            yield V("b", *idx)
        for idx in sorted(self.l_entries):
            yield V("l", *idx)

    def __or__(self, other: VariableSet) -> VariableSet:
        return VariableSet(self.z_entries | other.z_entries, self.b_entries | other.b_entries,
                           self.l_entries | other.l_entries)

    def __len__(self) -> int:
        return len(self.z_entries) + len(self.b_entries) + len(self.l_entries)


@dataclass(frozen=True)
class SearchConfig:
    g_max: int = 50
    kappa: int = 3
    subproblem_time_limit: float = 10.0
    seed: int = 1
    improvement_epsilon: float = 1e-9
    phase1_time_limit: float | None = None

    def __post_init__(self) -> None:
        if self.g_max < 1 or self.kappa < 1 or self.improvement_epsilon < 0:
            raise ValueError("need g_max >= 1, kappa >= 1 and improvement_epsilon >= 0")


@dataclass
class TraceEvent:
    iteration: int
    neighborhood: int
    applied: int  # neighbourhood actually used after horizon / redraw fallbacks
    i1: str
    t1: int
    i2: str | None
    t2: int | None
    start_tc: float  # incumbent TC the subproblem was built around
    candidate_tc: float | None
    optimal: bool  # subproblem solved to optimality
    accepted: bool
    incumbent_tc: float
    best_tc: float
    wall_time: float
    note: str = ""


@dataclass
class SearchTrace:
    events: list[TraceEvent] = field(default_factory=list)

    def to_jsonl(self, timing: bool = False) -> str:
        """One JSON record per event.  Wall time is left out unless asked for,
        so that identical runs serialize to identical bytes."""
        lines = []
        for ev in self.events:
            rec = asdict(ev)
            for key in ("start_tc", "candidate_tc", "incumbent_tc", "best_tc"):
                if rec[key] is not None:
                    rec[key] = round(rec[key], 9)
            if not timing:
                del rec["wall_time"]
            lines.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def _phase_sets(inst: Instance, i: str, t: int) -> VariableSet:
    others = [j for j in inst.active(t) if j != i]
    z = {(i, j, t, r) for j in others for r in AXES} | {(j, i, t, r) for j in others for r in AXES}
    b = {(i, k, t) for k in inst.zones.zones}
    l = {(i, t, r) for r in AXES}
    return VariableSet(frozenset(z), frozenset(b), frozenset(l))


def neighborhood(kind: int, i1: str, t1: int, inst: Instance,
                 i2: str | None = None, t2: int | None = None) -> VariableSet:
    """Free variables of neighbourhood U1..U4 around (i1, t1)."""
    if kind not in (1, 2, 3, 4):
        raise ValueError(f"neighbourhood kind must be 1..4, got {kind}")
    known = {d.id for d in inst.departments}
    for i in (i1, i2):
        if i is not None and i not in known:
            raise ValueError(f"unknown department {i!r}")
    if not inst.is_active(i1, t1):
        raise ValueError(f"department {i1} is not active in period {t1}")
    if kind == 1:
        return _phase_sets(inst, i1, t1)
    if kind == 2:
        if t1 + 1 > inst.periods or not inst.is_active(i1, t1 + 1):
            raise ValueError(f"U2 needs department {i1} active in period {t1 + 1}")
        return _phase_sets(inst, i1, t1) | _phase_sets(inst, i1, t1 + 1)
    if i2 is None or i2 == i1:
        raise ValueError("U3/U4 need a second, different department")
    if not inst.is_active(i2, t1):
        raise ValueError(f"department {i2} is not active in period {t1}")
    if kind == 3:
        return _phase_sets(inst, i1, t1) | _phase_sets(inst, i2, t1)
    if t2 is None or t2 == t1:
        raise ValueError("U4 needs a second, different period")
    if not (inst.is_active(i1, t2) and inst.is_active(i2, t2)):
        raise ValueError(f"U4 needs departments {i1} and {i2} active in period {t2}")
    return (_phase_sets(inst, i1, t1) | _phase_sets(inst, i1, t2)
            | _phase_sets(inst, i2, t1) | _phase_sets(inst, i2, t2))


def phase1(inst: Instance, cfg: SearchConfig, config: SolverConfig | None = None) -> LayoutSolution:
    """Initial incumbent: the full model solved until ``kappa`` solutions are found."""
    problems = validate(inst)
    if problems:
        raise ValidationError(problems)
    m = build_full_model(inst)
    res = solve(m, SolveLimits(time_limit=cfg.phase1_time_limit, solution_limit=cfg.kappa), config)
    if not res.has_solution:
        raise SearchError(f"phase 1 found no feasible solution (status {res.status}): {res.diagnostics[-500:]}")
    return decode(m, res, inst)


def generate_candidate(inst: Instance, incumbent: LayoutSolution, free: VariableSet, cfg: SearchConfig,
                       config: SolverConfig | None = None) -> tuple[LayoutSolution, bool]:
    """Re-optimize the variables in ``free`` around the incumbent.

    Returns the candidate and whether its subproblem was solved to optimality.
    A subproblem stopped early without beating the incumbent yields the
    incumbent itself.
    """
    m = build_restricted_model(inst, incumbent, free)
    res = solve(m, SolveLimits(time_limit=cfg.subproblem_time_limit), config)
    if res.status == INFEASIBLE:
        raise SearchError("restricted subproblem reported infeasible although the incumbent is feasible")
    if not res.has_solution:
        if not res.limit_reached:
            raise SearchError(f"subproblem solve failed ({res.status}): {res.diagnostics[-500:]}")
        return incumbent, False
    cand = decode(m, res, inst)
    if res.status == FEASIBLE and cand.tc >= incumbent.tc:
        return incumbent, False
    return cand, res.status == OPTIMAL


def _draw_partner(rng: random.Random, inst: Instance, kind: int, i1: str, t1: int
                  ) -> tuple[int, str | None, int | None, str]:
    """Second department / period for the drawn neighbourhood, with fallbacks."""
    if kind == 2:
        if t1 < inst.periods and inst.is_active(i1, t1 + 1):
            return 2, None, None, ""
        return 1, None, None, "U2 undefined at this period; used U1"
    if kind == 3:
        pool = [j for j in inst.active(t1) if j != i1]
        if not pool:
            return 1, None, None, "no second department; used U1"
        return 3, rng.choice(pool), None, ""
    if kind == 4:
        pool_i = [j for j in inst.active(t1) if j != i1]
        pool_t = [t for t in inst.period_range if t != t1]
        if pool_i and pool_t:
            for _ in range(MAX_REDRAWS):
                i2 = rng.choice(pool_i)
                t2 = rng.choice(pool_t)
                if inst.is_active(i1, t2) and inst.is_active(i2, t2):
                    return 4, i2, t2, ""
        if pool_i:
            return 3, rng.choice(pool_i), None, "no valid (i'', t'') for U4; used U3"
        return 1, None, None, "no second department; used U1"
    return 1, None, None, ""


def phase2(inst: Instance, start: LayoutSolution, cfg: SearchConfig,
           config: SolverConfig | None = None) -> tuple[LayoutSolution, SearchTrace]:
    rng = random.Random(cfg.seed)
    trace = SearchTrace()
    t0 = time.perf_counter()
    S = best = start
    K = 1
    noupdate = 0

    def improves(new: float, ref: float) -> bool:
        return new < ref - cfg.improvement_epsilon * abs(ref)

    for g in range(1, cfg.g_max + 1):
        noupdate += 1
        A = [(i, t) for t in inst.period_range for i in inst.active(t)]
        while A:
            i1, t1 = A.pop(rng.randrange(len(A)))
            applied, i2, t2, note = _draw_partner(rng, inst, K, i1, t1)
            free = neighborhood(applied, i1, t1, inst, i2, t2)
            cand_tc = None
            start_tc = S.tc
            accepted = optimal = False
            try:
                cand, optimal = generate_candidate(inst, S, free, cfg, config)
            except Exception as exc:  # recorded, search goes on
                note = (note + "; " if note else "") + f"candidate failed: {exc}"
                log.warning("g=%d K=%d (%s,%s): %s", g, K, i1, t1, exc)
            else:
                cand_tc = cand.tc
                if improves(cand.tc, best.tc):
                    best = S = cand
                    noupdate = 0
                    accepted = True
                elif improves(cand.tc, S.tc):
                    S = cand
                    accepted = True
            trace.events.append(TraceEvent(g, K, applied, i1, t1, i2, t2, start_tc, cand_tc, optimal, accepted,
                                           S.tc, best.tc,
                                           time.perf_counter() - t0, note))
        if noupdate > 0:
            K = K % 4 + 1
            S = best
    return best, trace


def run_vns(inst: Instance, cfg: SearchConfig, config: SolverConfig | None = None
            ) -> tuple[LayoutSolution, SearchTrace]:
    start = phase1(inst, cfg, config)
    if check(start, inst):
        raise SearchError("phase 1 solution fails the feasibility check")
    return phase2(inst, start, cfg, config)

"""MPS export and external MILP solver driver.

A ``ModelSpec`` is written as fixed-format MPS with generated 8-character
names (``C0000001`` columns, ``R0000001`` rows), the solver runs as a
subprocess in a private temporary directory, and its solution file is parsed
back.  Two solver dialects are understood:

``highs``
    The HiGHS command line binary (shipped by the ``highsbox`` package or found
    on ``PATH``).  Solution grammar: a ``Model status`` line followed by the
    status text, then ``# Columns N`` followed by ``name value`` lines.
``cbc``
    COIN-OR CBC.  Solution grammar: a first line ``<status> - objective value
    <x>`` followed by ``index name value reduced-cost`` lines.

The dialect is chosen with ``ZDFLP_SOLVER`` (default ``highs``);
``ZDFLP_SOLVER_CMD`` overrides the command with a template using the
placeholders ``{mps}``, ``{sol}``, ``{opts}``, ``{time_limit}``, ``{gap}``
and ``{solutions}``.
"""

from __future__ import annotations

import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelSpec, VarRef

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6
GAP_TOL = 1e-6
# enough for any model here; the limit keeps a stuck solver from hanging a run
DEFAULT_TIME_LIMIT = 3600.0

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ERROR = "error"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float | None = None
    gap_limit: float | None = None
    solution_limit: int | None = None

    def __post_init__(self) -> None:
        for name in ("time_limit", "gap_limit", "solution_limit"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")


@dataclass
class SolveResult:
    status: str
    objective: float | None = None
    values: dict[VarRef, float] = field(default_factory=dict)
    gap: float | None = None
    wall_time: float = 0.0
    diagnostics: str = ""
    limit_reached: bool = False  # a time/solution limit stopped the solver

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


# --------------------------------------------------------------------------
# MPS

def _fmt(x: float) -> str:
    """Shortest decimal of ``x`` that fits a 12-character MPS field."""
    if x == 0:
        return "0"
    if float(x).is_integer() and abs(x) < 1e11:
        return str(int(x))
    s = repr(float(x))
    if len(s) <= 12:
        return s
    for digits in range(12, 0, -1):
        s = f"{x:.{digits}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot format {x} in 12 characters")


def _line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # fixed MPS columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    s = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:<12}"
    if f5:
        s += f"   {f5:<8}  {f6:<12}"
    return s.rstrip()


def col_name(n: int) -> str:
    return f"C{n + 1:07d}"


def row_name(n: int) -> str:
    return f"R{n + 1:07d}"


def write_mps(m: ModelSpec, name: str = "ZDFLP") -> str:
    """Fixed-format MPS text; identical models give identical bytes."""
    rows: dict[int, list[tuple[int, float]]] = {n: [] for n in range(len(m.variables))}
    for r, row in enumerate(m.constraints):
        for ref, coef in row.terms:
            rows[m.column(ref)].append((r, coef))
    obj = {m.column(ref): coef for ref, coef in m.objective if coef != 0}

    out = [f"NAME          {name[:8]}", "ROWS", _line("N", "OBJ")]
    sense = {"<=": "L", ">=": "G", "=": "E"}
    for r, row in enumerate(m.constraints):
        out.append(_line(sense[row.sense], row_name(r)))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for n, ref in enumerate(m.variables):
        if ref.binary != in_int:
            tag = "'INTORG'" if ref.binary else "'INTEND'"
            out.append(f"    {'M%07d' % marker:<8}  'MARKER'                 {tag}")
            marker += 1
            in_int = ref.binary
        entries = ([("OBJ", obj[n])] if n in obj else []) + [(row_name(r), c) for r, c in rows[n]]
        if not entries:
            # keep the column declared so the solver reports its value
            entries = [("OBJ", 0.0)]
        for a in range(0, len(entries), 2):
            pair = entries[a:a + 2]
            fields = [col_name(n), pair[0][0], _fmt(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], _fmt(pair[1][1])]
            out.append(_line("", *fields))
    if in_int:
        out.append(f"    {'M%07d' % marker:<8}  'MARKER'                 'INTEND'")

    out.append("RHS")
    nonzero = [(row_name(r), row.rhs) for r, row in enumerate(m.constraints) if row.rhs != 0]
    for a in range(0, len(nonzero), 2):
        pair = nonzero[a:a + 2]
        fields = ["RHS", pair[0][0], _fmt(pair[0][1])]
        if len(pair) == 2:
            fields += [pair[1][0], _fmt(pair[1][1])]
        out.append(_line("", *fields))

    out.append("BOUNDS")
    for n, ref in enumerate(m.variables):
        lo, hi = m.bounds(ref)
        if ref in m.fixings:
            out.append(_line("FX", "BND", col_name(n), _fmt(lo)))
            continue
        out.append(_line("LO", "BND", col_name(n), _fmt(lo)))
        if math.isinf(hi):
            out.append(_line("PL", "BND", col_name(n)))
        else:
            out.append(_line("UP", "BND", col_name(n), _fmt(hi)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# solver configuration

def _highs_binary() -> tuple[str, dict[str, str]]:
    env: dict[str, str] = {}
    try:
        import highsbox

        path = highsbox.highs_bin_path()
        if os.path.exists(path):
            lib = highsbox.highs_lib_dir()
            env["LD_LIBRARY_PATH"] = os.pathsep.join(filter(None, [lib, os.environ.get("LD_LIBRARY_PATH")]))
            return path, env
    except ImportError:
        pass
    path = shutil.which("highs")
    if path is None:
        raise SolverError("no HiGHS binary found; install highsbox or put 'highs' on PATH")
    return path, env


def _cbc_binary() -> str:
    path = shutil.which("cbc")
    if path:
        return path
    try:
        import pulp

        cand = Path(pulp.__file__).parent / "solverdir" / "cbc" / "linux" / "i64" / "cbc"
        if cand.exists():
            return str(cand)
    except ImportError:
        pass
    raise SolverError("no CBC binary found on PATH")


@dataclass(frozen=True)
class SolverConfig:
    dialect: str = "highs"
    command: str | None = None  # template overriding the built-in invocation

    @classmethod
    def from_env(cls) -> SolverConfig:
        return cls(os.environ.get("ZDFLP_SOLVER", "highs").strip().lower(), os.environ.get("ZDFLP_SOLVER_CMD") or None)

    def argv(self, mps: Path, sol: Path, opts: Path, limits: SolveLimits) -> tuple[list[str], dict[str, str]]:
        time_limit = limits.time_limit or DEFAULT_TIME_LIMIT
        gap = limits.gap_limit or GAP_TOL
        if self.command:
            cmd = self.command.format(mps=mps, sol=sol, opts=opts, time_limit=time_limit, gap=gap,
                                      solutions=limits.solution_limit or 0)
            return shlex.split(cmd), {}
        if self.dialect == "highs":
            path, env = _highs_binary()
            return [path, "--model_file", str(mps), "--options_file", str(opts), "--solution_file", str(sol)], env
        if self.dialect == "cbc":
            argv = [_cbc_binary(), str(mps), "sec", repr(time_limit), "ratio", repr(gap),
                    "primalT", "1e-9", "integerT", "1e-9", "randomSeed", "1", "threads", "1"]
            if limits.solution_limit:
                argv += ["maxSolutions", str(limits.solution_limit)]
            return argv + ["solve", "solu", str(sol)], {}
        raise SolverError(f"unknown solver dialect {self.dialect!r}")


def _highs_options(limits: SolveLimits) -> str:
    lines = [
        f"time_limit = {limits.time_limit or DEFAULT_TIME_LIMIT!r}",
        f"mip_rel_gap = {limits.gap_limit or GAP_TOL!r}",
        "mip_abs_gap = 1e-9",
        "mip_feasibility_tolerance = 1e-9",
        "primal_feasibility_tolerance = 1e-9",
        "random_seed = 0",
        "threads = 1",
    ]
    if limits.solution_limit:
        lines.append(f"mip_max_improving_sols = {limits.solution_limit}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# solution parsing

_HIGHS_STATUS = {
    "optimal": OPTIMAL,
    "infeasible": INFEASIBLE,
    "unbounded": UNBOUNDED,
    "primal infeasible or unbounded": INFEASIBLE,
}


def parse_highs_solution(text: str) -> tuple[str, dict[str, float], float | None, bool]:
    lines = text.splitlines()
    if len(lines) < 2 or lines[0].strip() != "Model status":
        raise SolverError("malformed HiGHS solution file")
    raw = lines[1].strip().lower()
    values: dict[str, float] = {}
    objective = None
    has_primal = False
    n = 2
    while n < len(lines):
        line = lines[n].strip()
        if line == "# Primal solution values":
            has_primal = n + 1 < len(lines) and lines[n + 1].strip().lower() == "feasible"
        elif line.startswith("Objective ") and objective is None:
            objective = float(line.split()[1])
        elif line.startswith("# Columns"):
            count = int(line.split()[2])
            for entry in lines[n + 1:n + 1 + count]:
                name, val = entry.split()
                values[name] = float(val)
            n += count
        elif line.startswith("# Rows") or line.startswith("# Dual"):
            break
        n += 1
    status = _HIGHS_STATUS.get(raw)
    if status is None:
        status = FEASIBLE if has_primal else ERROR
    elif status == OPTIMAL and not has_primal:
        status = ERROR
    if status not in (OPTIMAL, FEASIBLE):
        values, objective = {}, None
    return status, values, objective, "limit" in raw


def parse_cbc_solution(text: str) -> tuple[str, dict[str, float], float | None, bool]:
    lines = text.splitlines()
    if not lines:
        raise SolverError("empty CBC solution file")
    head = lines[0].strip()
    m = re.search(r"objective value\s+(\S+)", head)
    objective = float(m.group(1)) if m else None
    low = head.lower()
    if low.startswith("optimal"):
        status = OPTIMAL
    elif "infeasible" in low:
        status = INFEASIBLE
    elif "unbounded" in low:
        status = UNBOUNDED
    elif low.startswith("stopped") and objective is not None and "no integer" not in low:
        status = FEASIBLE
    else:
        status = ERROR
    values: dict[str, float] = {}
    if status in (OPTIMAL, FEASIBLE):
        for entry in lines[1:]:
            parts = entry.split()
            if len(parts) >= 3:
                # infeasible markers "**" prefix the index on some builds
                if parts[0] == "**":
                    parts = parts[1:]
                values[parts[1]] = float(parts[2])
    else:
        objective = None
    return status, values, objective, low.startswith("stopped")


def _highs_gap(stdout: str) -> float | None:
    m = re.search(r"^\s*Gap\s+([-+0-9.eE]+)%", stdout, re.MULTILINE)
    if m:
        return float(m.group(1)) / 100.0
    if re.search(r"^\s*Gap\s+inf", stdout, re.MULTILINE):
        return math.inf
    return None


# --------------------------------------------------------------------------
# solve

def check_values(m: ModelSpec, values: dict[VarRef, float], tol: float = FEAS_TOL) -> list[str]:
    """Rows, bounds and integrality the values break by more than ``tol``."""
    bad = []
    for ref in m.variables:
        x = values[ref]
        lo, hi = m.bounds(ref)
        if x < lo - tol or x > hi + tol:
            bad.append(f"bound {ref.name}={x} outside [{lo}, {hi}]")
        if ref.binary and abs(x - round(x)) > INT_TOL:
            bad.append(f"integrality {ref.name}={x}")
    for n, row in enumerate(m.constraints):
        viol = row.violation(values)
        if viol > tol:
            bad.append(f"row {n} ({row.tag}) violated by {viol:.3g}")
    return bad


def solve(m: ModelSpec, limits: SolveLimits | None = None, config: SolverConfig | None = None) -> SolveResult:
    """Solve ``m`` with the configured external solver."""
    limits = limits or SolveLimits()
    config = config or SolverConfig.from_env()
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="zdflp-") as tmp:
        mps, sol, opts = Path(tmp, "model.mps"), Path(tmp, "model.sol"), Path(tmp, "options.txt")
        mps.write_text(write_mps(m))
        opts.write_text(_highs_options(limits))
        try:
            argv, extra_env = config.argv(mps, sol, opts, limits)
        except SolverError as exc:
            return SolveResult(ERROR, diagnostics=str(exc), wall_time=time.perf_counter() - start)
        env = {**os.environ, **extra_env}
        # generous watchdog over the solver's own limit
        watchdog = (limits.time_limit or DEFAULT_TIME_LIMIT) * 2 + 30
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, env=env, cwd=tmp, timeout=watchdog)
        except (OSError, subprocess.TimeoutExpired) as exc:
            return SolveResult(ERROR, diagnostics=f"solver invocation failed: {exc}",
                               wall_time=time.perf_counter() - start)
        wall = time.perf_counter() - start
        diag = (proc.stdout[-4000:] + proc.stderr[-2000:]).strip()
        if proc.returncode != 0 and not sol.exists():
            return SolveResult(ERROR, diagnostics=f"solver exited with {proc.returncode}: {diag}", wall_time=wall)
        if not sol.exists():
            return SolveResult(ERROR, diagnostics=f"solver wrote no solution file: {diag}", wall_time=wall)
        text = sol.read_text()
    try:
        if config.dialect == "cbc":
            status, named, objective, limited = parse_cbc_solution(text)
            gap = 0.0 if status == OPTIMAL else None
        else:
            status, named, objective, limited = parse_highs_solution(text)
            gap = _highs_gap(proc.stdout)
    except (SolverError, ValueError, IndexError) as exc:
        return SolveResult(ERROR, diagnostics=f"unparseable solution: {exc}", wall_time=wall)

    if status not in (OPTIMAL, FEASIBLE):
        return SolveResult(status, gap=gap, wall_time=wall, diagnostics=diag, limit_reached=limited)

    values: dict[VarRef, float] = {}
    for n, ref in enumerate(m.variables):
        name = col_name(n)
        if name not in named:
            if config.dialect == "cbc":
                named[name] = 0.0  # CBC omits zero-valued columns
            else:
                return SolveResult(ERROR, diagnostics=f"solution lacks column {name} ({ref.name})", wall_time=wall)
        x = named[name]
        if ref.binary:
            # snap within integrality tolerance so big-M rows read cleanly
            r = round(x)
            if abs(x - r) <= INT_TOL:
                x = float(r)
        values[ref] = x
    if status == OPTIMAL and gap is None:
        gap = 0.0
    problems = check_values(m, values)
    if problems:
        return SolveResult(ERROR, objective, values, gap, wall,
                           diagnostics="solution fails re-check: " + "; ".join(problems[:10]))
    if objective is None:
        objective = m.objective_value(values)
    return SolveResult(status, objective, values, gap, wall, diag, limited)

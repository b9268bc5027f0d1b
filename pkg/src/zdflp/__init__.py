"""Zone-based dynamic facility layout: MILP model, MIP-VNS matheuristic,
independent evaluator, enumeration oracle and SVG rendering."""

from importlib import resources
from pathlib import Path

from .instance import Instance, load_instance, parse_instance, validate
from .evaluate import LayoutSolution, check, decode, oracle_solve, recompute_tc
from .model import build_full_model, build_restricted_model
from .vns import SearchConfig, run_vns

__all__ = [
    "Instance", "LayoutSolution", "SearchConfig",
    "build_full_model", "build_restricted_model", "check", "decode", "fixture_path",
    "load_instance", "oracle_solve", "parse_instance", "recompute_tc", "run_vns", "validate",
]


def fixture_path(name: str = "") -> Path:
    """Path of a bundled tiny instance (or of the fixture directory)."""
    base = Path(str(resources.files(__package__) / "fixtures"))
    return base / f"{name}.json" if name else base

import json
import shutil
import xml.etree.ElementTree as ET

import pytest

from zdflp import fixture_path
from zdflp.backend import write_mps
from zdflp.cli import format_table, main, run_bench
from zdflp.model import build_full_model
from zdflp.render import RenderStyle, render_period, render_solution
from zdflp.vns import SearchConfig
from helpers import exact, fixture, oracle, rel_err

from zdflp.evaluate import solution_to_dict

SVG = "{http://www.w3.org/2000/svg}"


def fx(name):
    return str(fixture_path(name))


def classes(svg_text):
    root = ET.fromstring(svg_text.split("\n", 1)[1])
    out = {}
    for el in root.iter():
        c = el.get("class")
        if c:
            out.setdefault(c, []).append(el)
    return root, out


def test_validate_ok(capsys):
    assert main(["validate", "--instance", fx("replacement")]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    doc = json.loads(fixture_path("two_dept").read_text())
    doc["zones"]["count"] = 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", "--instance", str(bad)]) == 2
    assert "zone-count" in capsys.readouterr().out


def test_schema_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"facility": {}}')
    assert main(["validate", "--instance", str(bad)]) == 2
    assert main(["solve", "--instance", str(bad)]) == 2


def test_solve_exact_single_department(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["solve", "--instance", fx("one_dept"), "--method", "exact", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "TC" in text
    assert json.loads(out.read_text())["costs"]["total"] == 0.0


def test_solve_writes_mps(tmp_path):
    mps = tmp_path / "m.mps"
    assert main(["solve", "--instance", fx("two_dept"), "--method", "exact", "--mps", str(mps)]) == 0
    assert mps.read_text() == write_mps(build_full_model(fixture("two_dept")))


def test_solve_vns_is_reproducible(tmp_path):
    paths = []
    for run in ("a", "b"):
        sol, trace = tmp_path / f"{run}.json", tmp_path / f"{run}.jsonl"
        argv = ["solve", "--instance", fx("three_dept_two_zone"), "--method", "vns", "--seed", "7", "--gmax", "5",
                "--out", str(sol), "--trace", str(trace)]
        assert main(argv) == 0
        paths.append((sol.read_bytes(), trace.read_bytes()))
    assert paths[0] == paths[1]
    doc = json.loads(paths[0][0])
    assert rel_err(doc["costs"]["total"], oracle("three_dept_two_zone").tc) <= 1e-4


def test_solve_delta_override(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", "--instance", fx("two_dept"), "--method", "exact", "--delta", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["costs"]["total"] == pytest.approx(1.0, abs=1e-6)


def test_evaluate_command(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["solve", "--instance", fx("two_dept"), "--method", "exact", "--out", str(out)]) == 0
    assert main(["evaluate", "--instance", fx("two_dept"), str(out)]) == 0
    doc = json.loads(out.read_text())
    doc["periods"][0]["departments"][0]["center"] = [20.0, 20.0]
    out.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["evaluate", "--instance", fx("two_dept"), str(out)]) == 1
    assert "dept-outside-zone" in capsys.readouterr().out


def test_oracle_command(tmp_path, capsys):
    assert main(["oracle", "--instance", fx("two_dept")]) == 0
    assert "1.0000" in capsys.readouterr().out
    big = json.loads(fixture_path("four_dept_pinned").read_text())
    big["departments"].append(dict(big["departments"][0], id="extra"))
    path = tmp_path / "big.json"
    path.write_text(json.dumps(big))
    assert main(["oracle", "--instance", str(path)]) == 2


def test_render_single_department():
    doc = solution_to_dict(exact("one_dept")[2], fixture("one_dept"))
    pages = render_solution(doc)
    assert list(pages) == [1]
    root, els = classes(pages[1])
    assert root.tag == SVG + "svg" and root.get("version") == "1.1"
    assert len(els["department"]) == 1 and len(els["io"]) == 1 and len(els["facility"]) == 1


def test_render_element_counts_per_period():
    inst = fixture("replacement")
    doc = solution_to_dict(exact("replacement")[2], inst)
    pages = render_solution(doc)
    assert sorted(pages) == [1, 2]
    for t, text in pages.items():
        _, els = classes(text)
        assert len(els["department"]) == len(inst.active(t))
        assert len(els["zone"]) == inst.zones.zone_count
    _, els = classes(pages[2])
    assert "4 → 3" in [e.text for e in els["label"]]


def test_render_flags_and_flip():
    doc = solution_to_dict(exact("two_dept")[2], fixture("two_dept"))
    _, els = classes(render_period(doc, 1, RenderStyle(scale=10, show_io=False, show_zone_bounds=False)))
    assert "io" not in els and "zone" not in els
    # y grows upward in the layout, downward on screen
    frame = els["facility"][0]
    d = doc["periods"][0]["departments"][0]
    rect = next(e for e in els["department"] if e.get("data-id") == d["id"])
    top_screen = float(frame.get("y")) + (10.0 - (d["center"][1] + d["half"][1])) * 10
    assert float(rect.get("y")) == pytest.approx(top_screen, abs=0.01)


def test_render_style_validation():
    with pytest.raises(ValueError):
        RenderStyle(scale=0)


def test_render_command(tmp_path):
    sol = tmp_path / "rep.json"
    sol.write_text(json.dumps(solution_to_dict(exact("replacement")[2], fixture("replacement"))))
    assert main(["render", str(sol), "--out", str(tmp_path / "svg")]) == 0
    assert sorted(p.name for p in (tmp_path / "svg").iterdir()) == ["rep_t1.svg", "rep_t2.svg"]
    bad = tmp_path / "bad.json"
    bad.write_text('{"periods": [{"t": 1}]}')
    assert main(["render", str(bad), "--out", str(tmp_path)]) == 2


def test_bench_empty_directory(tmp_path, capsys):
    assert main(["bench", "--instance", str(tmp_path)]) == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    assert "Problem" in captured.out


def test_bench_single_replication(tmp_path):
    shutil.copy(fixture_path("two_dept"), tmp_path)
    rows = run_bench(tmp_path, 1, SearchConfig(g_max=2))
    assert rows[0]["status"] == "ok"
    assert rows[0]["best"] == rows[0]["average"]
    assert "two_dept" in format_table(rows)


def test_bench_five_replications_reach_oracle(tmp_path):
    shutil.copy(fixture_path("three_dept_two_zone"), tmp_path)
    out = tmp_path / "bench.json"
    assert main(["bench", "--instance", str(tmp_path), "--replications", "5", "--gmax", "5",
                 "--out", str(out)]) == 0
    (row,) = json.loads(out.read_text())
    assert [round(x, 6) for x in row["tc"]] and len(row["tc"]) == 5
    assert rel_err(row["best"], oracle("three_dept_two_zone").tc) <= 1e-4


def test_bench_failed_instance(tmp_path, capsys):
    (tmp_path / "broken.json").write_text("{}")
    assert main(["bench", "--instance", str(tmp_path), "--replications", "1"]) == 1
    assert "failed" in capsys.readouterr().out

import json

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from xiga.errors import ConfigError
from xiga.harness import (StepRecord, StudyReport, apply_override, dump_yaml, emit_report, from_dict, load_yaml,
                          make_config, run_study, to_dict, validate)
from xiga.harness.cli import main
from xiga.harness.report import COLUMNS, csv_text, field_soup_text, read_soup
from xiga.harness.studies import build_forest, build_geometry, cell_matches
from xiga.harness.config import Criterion

SMALL_BAR = {"study": "bar2d", "refinement": {"uniform": [0, 1]}}


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4), st.integers(1, 4), st.integers(1, 9),
       st.booleans(), st.floats(0.0, 10.0, allow_nan=False))
def test_config_round_trip(uniform, degree, count, timings, value):
    data = {"study": "bar2d", "mesh": {"counts": [count, 2]}, "fields": {"u": {"degree": degree}},
            "refinement": {"uniform": uniform}, "output": {"timings": timings},
            "bcs": [{"field": "u", "kind": "dirichlet", "where": "left", "value": value}]}
    cfg = make_config(data)
    assert from_dict(to_dict(cfg)) == cfg
    assert from_dict(yaml.safe_load(dump_yaml(cfg))) == cfg
    assert cfg.n_steps == len(uniform)


def test_overrides():
    data = to_dict(make_config({"study": "bar2d"}))
    apply_override(data, "fields.u.degree=3")
    apply_override(data, "refinement.uniform=[0, 1]")
    apply_override(data, "bcs.0.value=0.5")
    apply_override(data, "materials.0.E=2.0")
    cfg = from_dict(data)
    assert cfg.fields["u"].degree == 3
    assert cfg.refinement.uniform == [0, 1]
    assert cfg.bcs[0].value == 0.5
    assert cfg.materials[0]["E"] == 2.0
    for bad in ("fields.u.degree", "bcs.7.value=1", "bcs.x.value=1"):
        with pytest.raises(ConfigError):
            apply_override(data, bad)


def test_validation_messages():
    with pytest.raises(ConfigError, match="unknown key"):
        make_config({"study": "bar2d", "mesh": {"cells": [2, 2]}})
    with pytest.raises(ConfigError, match="unknown study"):
        make_config({"study": "nope"})
    with pytest.raises(ConfigError):
        load_yaml("- just a list")
    cfg = make_config({"study": "bar2d", "fields": {"u": {"degree": 7}},
                       "refinement": {"local": [1, 1], "b_buffer": 1}})
    errs = "\n".join(validate(cfg))
    for text in ("degree must be in 1..4", "same length", "b_buffer", "need at least one criterion"):
        assert text in errs
    assert validate(make_config({"study": "lshape"})) == []


def test_cell_criteria():
    cfg = make_config({"study": "lshape"})
    geo = build_geometry(cfg.geometry)
    forest = build_forest(cfg, 0, 0, geo)
    box = Criterion("T", "box", box=[0.0, 0.0, 0.0, 0.0])
    hits = [c for c in forest.active_mesh(0) if cell_matches(forest, c, box, geo)]
    assert len(hits) == 1  # the origin lies inside one cell of the shifted grid
    seg = Criterion("T", "boundary", c=0.0, segment=[[-1.127, -1.127], [-1.127, 1.173]])
    assert len([c for c in forest.active_mesh(0) if cell_matches(forest, c, seg, geo)]) == 6
    local = build_forest(cfg, 0, 2, geo)
    assert local.max_level(0) == 2
    assert len(local.active_mesh(0)) < len(build_forest(cfg, 2, 0, geo).active_mesh(0))


def test_empty_report_csv_is_header_only():
    assert csv_text(StudyReport("x")) == ",".join(COLUMNS) + "\n"


def test_report_rates_and_blank_seconds():
    rep = StudyReport("x", [StepRecord(0, "u", 10, 0.5, 4e-2, 2e-1, 1.5), StepRecord(1, "u", 30, 0.25, 5e-3, 1e-1, 2.5)])
    assert rep.rates("u", "L2") == pytest.approx([3.0])
    rows = csv_text(rep).splitlines()
    assert rows[1].split(",")[6:] == ["", "", ""]
    assert rows[2].split(",")[6:] == ["3.0000", "1.0000", ""]
    assert csv_text(rep, timings=True).splitlines()[2].endswith(",2.500")


def test_bar2d_run_rates_and_deterministic_output(tmp_path):
    cfg = make_config({"study": "bar2d", "refinement": {"uniform": [0, 1, 2, 3]}})
    report = run_study(cfg)
    rates = report.rates("u", "L2")
    assert rates[-1] == pytest.approx(3.0, abs=0.15)
    again = run_study(cfg)
    assert csv_text(report) == csv_text(again)
    paths = emit_report(report, tmp_path / "a", export_fields=True)
    emit_report(again, tmp_path / "b", export_fields=True)
    assert (tmp_path / "a" / "errors.csv").read_bytes() == (tmp_path / "b" / "errors.csv").read_bytes()
    summary = json.loads(paths["summary"].read_text())
    assert summary["fields"]["u"]["n_dof"] == [r.n_dof for r in report.series("u")]
    text = paths["field_u"].read_text()
    n_tri = int(text.splitlines()[2].split()[-1])
    verts, vals = read_soup(paths["field_u"])
    assert len(verts) == 3 * n_tri and vals.shape == (3 * n_tri, 2)
    assert "errors.png" in paths["plot"].read_text()


def test_soup_values_match_solution():
    report = run_study(make_config(SMALL_BAR))
    sol = report.solutions["u"]
    rows = [list(map(float, l.split())) for l in field_soup_text(sol).splitlines() if not l.startswith("#")]
    data = np.array(rows)
    inner = (data[:, 0] > 1e-3) & (data[:, 0] < 1 - 1e-3) & (np.abs(data[:, 0] - 0.5123) > 1e-3)
    v, _ = sol.evaluate(data[inner, :2])
    np.testing.assert_allclose(v, data[inner, 2:], atol=1e-8)


def test_cli(tmp_path, capsys):
    assert main(["list-studies"]) == 0
    out = capsys.readouterr().out
    for name in ("bar2d", "lshape", "elliptic_hole", "two_material_plate"):
        assert name in out
    conf = tmp_path / "bar.yaml"
    conf.write_text(yaml.safe_dump(SMALL_BAR))
    assert main(["validate", str(conf), "--set", "fields.u.degree=1"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["fields"]["u"]["degree"] == 1
    assert main(["validate", str(conf), "--set", "fields.u.degree=9"]) == 2
    assert main(["validate", str(conf), "--set", "mesh.cells=3"]) == 2
    assert main(["run", str(conf), "--out", str(tmp_path / "out"), "--set", "output.timings=true"]) == 0
    lines = (tmp_path / "out" / "errors.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0] == ",".join(COLUMNS)
    assert lines[1].split(",")[-1] != ""
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "tiny.yaml"
    bad.write_text(yaml.safe_dump({"study": "bar2d", "mesh": {"counts": [2, 1]}, "refinement": {"uniform": [0]},
                                   "geometry": {"kind": "circle", "center": [0.5, 0.25], "radius": 0.01}}))
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 3

"""Report files: CSV table, plot script, field export and run summary.

Field export format (one file per field, line oriented)::

    # xiga triangle soup
    # field <name> components <nc>
    # triangles <n>
    x y v_0 .. v_{nc-1}        <- 3 lines per triangle, counter-clockwise

Every triangle is written with its own three vertices, so the vertex count
is three times the triangle count. Values come from the triangle's region.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..physics import FieldSolution
from .studies import StudyReport

COLUMNS = ("step", "field", "n_dof", "h", "err_L2", "err_H1", "rate_L2", "rate_H1", "seconds")


def _num(v: float, fmt: str) -> str:
    return "" if v is None or not math.isfinite(v) else format(v, fmt)


def csv_text(report: StudyReport, timings: bool = False) -> str:
    """CSV with the fixed column order; ``seconds`` left blank unless ``timings``."""
    lines = [",".join(COLUMNS)]
    for name in report.field_names:
        rows = report.series(name)
        rl, rh = [None] + report.rates(name, "L2"), [None] + report.rates(name, "H1")
        for r, a, b in zip(rows, rl, rh):
            lines.append(",".join([str(r.step), r.field, str(r.n_dof), _num(r.h, ".10g"), _num(r.err_L2, ".10e"),
                                   _num(r.err_H1, ".10e"), _num(a, ".4f"), _num(b, ".4f"),
                                   _num(r.seconds, ".3f") if timings else ""]))
    return "\n".join(lines) + "\n"


PLOT_SCRIPT = '''"""Log-log error plots for {csv}. Needs matplotlib."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "{csv}")))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, col in zip(axes, ("err_L2", "err_H1")):
    for name in dict.fromkeys(r["field"] for r in rows):
        pts = [(int(r["n_dof"]), float(r[col])) for r in rows if r["field"] == name and r[col]]
        if pts:
            ax.loglog(*zip(*pts), "o-", label=name)
    ax.set_xlabel("DOFs")
    ax.set_ylabel(col)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
fig.suptitle("{study}")
fig.tight_layout()
fig.savefig(here / "errors.png", dpi=150)
if "--show" in sys.argv:
    plt.show()
'''


def plot_script_text(report: StudyReport, csv_name: str = "errors.csv") -> str:
    return PLOT_SCRIPT.format(csv=csv_name, study=report.study)


def field_soup_text(sol: FieldSolution) -> str:
    """Triangle soup of a solved field over the non-void regions."""
    mesh = sol.space.mesh
    void = mesh.geometry.void
    nc = sol.space.ncomp
    out = []
    n_tri = 0
    for r, reg in enumerate(mesh.regions):
        if reg.phase in void:
            continue
        tris = mesh.region_triangles(r)
        pts = tris.reshape(1, -1, 2)
        val, _ = sol.region_values([r], pts)
        val = val[0]
        for k, v in enumerate(tris.reshape(-1, 2)):
            out.append(" ".join([format(v[0], ".10g"), format(v[1], ".10g")]
                                + [format(x, ".10g") for x in val[k]]))
        n_tri += len(tris)
    head = ["# xiga triangle soup", f"# field {sol.space.name} components {nc}", f"# triangles {n_tri}"]
    return "\n".join(head + out) + "\n"


def read_soup(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices ``(3 n, 2)`` and values ``(3 n, nc)`` of a triangle soup file."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line and not line.startswith("#")]
    data = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, 3))
    return data[:, :2], data[:, 2:]


def summary(report: StudyReport) -> dict:
    """JSON-ready run summary (includes wall times)."""
    fields = {}
    for name in report.field_names:
        rows = report.series(name)
        fields[name] = {"n_dof": [r.n_dof for r in rows], "err_L2": [r.err_L2 for r in rows],
                        "err_H1": [r.err_H1 for r in rows], "rate_L2": report.rates(name, "L2"),
                        "rate_H1": report.rates(name, "H1"), "seconds": [r.seconds for r in rows]}
    data = {"study": report.study, "fields": fields, "info": report.info}
    return json.loads(json.dumps(data, default=float).replace("NaN", "null"))


def emit_report(report: StudyReport, out_dir, timings: bool = False, export_fields: bool = False) -> dict[str, Path]:
    """Write the report files into ``out_dir``; returns the written paths.

    Raises:
        OSError: when the directory or a file cannot be written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "errors.csv", "plot": out / "plot_errors.py", "summary": out / "summary.json"}
    paths["csv"].write_text(csv_text(report, timings))
    paths["plot"].write_text(plot_script_text(report, paths["csv"].name))
    paths["summary"].write_text(json.dumps(summary(report), indent=2) + "\n")
    if export_fields:
        for name, sol in report.solutions.items():
            key = f"field_{name}"
            paths[key] = out / f"{key}.soup"
            paths[key].write_text(field_soup_text(sol))
    return paths

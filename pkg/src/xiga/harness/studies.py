"""Built-in studies and the refinement-step driver."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..discretize import Discretization, FieldSpec, discretize
from ..errors import ConfigError
from ..geometry import (LevelSetGeometry, circle, ellipse, half_plane, load_lattice_csv, lshape_geometry)
from ..physics import (BoundaryCondition, FieldSolution, assemble, error_norms, interface_von_mises_error,
                       solve_system)
from ..polytree import PolyTreeForest, init_base
from .config import Criterion, StudyConfig, deep_merge, from_dict, validate

log = logging.getLogger(__name__)

ExactFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
N_COMP = {"T": 1, "u": 2}

_EXPR_NAMES = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "arctan2", "sinh", "cosh", "tanh", "hypot")}


# ---- records -------------------------------------------------------------------

@dataclass
class StepRecord:
    """One row of a report: errors of one field (or metric) at one step."""

    step: int
    field: str
    n_dof: int
    h: float
    err_L2: float
    err_H1: float
    seconds: float = 0.0


@dataclass
class StudyReport:
    """Rows of a finished study plus the last step's solutions."""

    study: str
    records: list[StepRecord] = field(default_factory=list)
    solutions: dict[str, FieldSolution] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def series(self, name: str) -> list[StepRecord]:
        return sorted((r for r in self.records if r.field == name), key=lambda r: r.step)

    def rates(self, name: str, norm: str = "L2") -> list[float]:
        """Successive ``log2`` error ratios; defined from the second step on."""
        errs = [getattr(r, f"err_{norm}") for r in self.series(name)]
        return [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(errs, errs[1:])]

    @property
    def field_names(self) -> list[str]:
        return list(dict.fromkeys(r.field for r in self.records))


# ---- study registry ------------------------------------------------------------

@dataclass
class Study:
    """A built-in study: default config, analytic data and extra metrics."""

    name: str
    description: str
    defaults: Callable[[], dict]
    exact: Callable[[StudyConfig], dict[str, ExactFn]] = lambda cfg: {}
    sources: Callable[[StudyConfig], dict[str, Callable]] = lambda cfg: {}
    metrics: Callable | None = None


STUDIES: dict[str, Study] = {}


def register(study: Study) -> Study:
    STUDIES[study.name] = study
    return study


def get_study(name: str) -> Study:
    if name not in STUDIES:
        raise ConfigError(f"unknown study {name!r}; known: {', '.join(sorted(STUDIES))}")
    return STUDIES[name]


def make_config(data: dict) -> StudyConfig:
    """Merge a user document over the study defaults and build the config."""
    if not isinstance(data, dict) or "study" not in data:
        raise ConfigError("config needs a 'study' key")
    study = get_study(str(data["study"]))
    merged = deep_merge(study.defaults(), data)
    return from_dict(merged)


# ---- bar2d ---------------------------------------------------------------------

def _bar_defaults() -> dict:
    return {
        "study": "bar2d",
        "mesh": {"counts": [8, 4], "bounds": [[0.0, 0.0], [1.0, 0.5]]},
        "fields": {"u": {"degree": 2, "ai": 0}},
        "refinement": {"uniform": [0, 1, 2, 3, 4]},
        "geometry": {"kind": "half_plane", "point": [0.5123, 0.2571], "angle": float(np.pi / 2)},
        "materials": {0: {"E": 1.0, "nu": 0.0}, 1: {"E": 1.0, "nu": 0.0}},
        "bcs": [{"field": "u", "kind": "dirichlet", "where": "left", "value": 0.0}],
        "params": {"area": 0.25, "load": 2.0},
    }


def _bar_scale(cfg: StudyConfig) -> tuple[float, float]:
    E = cfg.materials.get(0, {}).get("E", 1.0)
    length = cfg.mesh.bounds[1][0] - cfg.mesh.bounds[0][0]
    return cfg.params["load"] / (E * cfg.params["area"]), length


def _bar_exact(cfg: StudyConfig) -> dict[str, ExactFn]:
    """Clamped-free bar under ``b = load * x**2`` per unit length (matched materials)."""
    k, L = _bar_scale(cfg)
    x0 = cfg.mesh.bounds[0][0]

    def u(X):
        x = X[:, 0] - x0
        val = np.stack([k * (L ** 3 * x / 3 - x ** 4 / 12), np.zeros(len(X))], axis=-1)
        grad = np.zeros((len(X), 2, 2))
        grad[:, 0, 0] = k * (L ** 3 - x ** 3) / 3
        return val, grad

    return {"u": u}


def _bar_sources(cfg: StudyConfig) -> dict[str, Callable]:
    load = cfg.params["load"] / cfg.params["area"]
    x0 = cfg.mesh.bounds[0][0]
    return {"u": lambda X: np.stack([load * (X[:, 0] - x0) ** 2, np.zeros(len(X))], axis=-1)}


register(Study("bar2d", "two-material bar with an inclined interface, analytic reference",
               _bar_defaults, _bar_exact, _bar_sources))


# ---- lshape --------------------------------------------------------------------

def _lshape_defaults() -> dict:
    return {
        "study": "lshape",
        "mesh": {"counts": [6, 6], "bounds": [[-1.127, -1.127], [1.173, 1.173]]},
        "fields": {"T": {"degree": 2, "ai": 0}},
        "refinement": {"uniform": [0, 1, 2, 3],
                       "criteria": [{"field": "T", "kind": "box", "box": [0.0, 0.0, 0.0, 0.0]}]},
        "geometry": {"kind": "lshape", "half_width": 1.0},
        "materials": {0: {"kappa": 1.0}},
        "bcs": [{"field": "T", "kind": "dirichlet", "where": "immersed", "value": "exact"}],
    }


def lshape_exact(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``r**(2/3) sin(2 theta / 3)`` with ``theta`` in ``[0, 3 pi / 2]`` on the domain."""
    a = 2.0 / 3.0
    x, y = X[:, 0], X[:, 1]
    r = np.hypot(x, y)
    th = np.arctan2(y, x)
    th = np.where(th < -np.pi / 4, th + 2 * np.pi, th)
    val = r ** a * np.sin(a * th)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = a * r ** (a - 1)
    grad = np.stack([g * np.sin((a - 1) * th), g * np.cos((a - 1) * th)], axis=-1)
    return val[:, None], grad[:, None, :]


register(Study("lshape", "L-shaped domain with a corner singularity, uniform or local refinement",
               _lshape_defaults, lambda cfg: {"T": lshape_exact}))


# ---- elliptic_hole -------------------------------------------------------------

def _ellipse_defaults() -> dict:
    return {
        "study": "elliptic_hole",
        "mesh": {"counts": [10, 10], "bounds": [[0.0, 0.0], [2.0, 2.0]]},
        "fields": {"T": {"degree": 1, "ai": 0}, "u": {"degree": 2, "ai": 1, "fixed_level": 4}},
        "refinement": {"uniform": [0, 1, 2]},
        "union_level": 4,
        "geometry": {"kind": "ellipse", "center": [0.0, 0.0], "a": 0.8136, "b": 0.5753, "void": [0]},
        "materials": {1: {"E": 1.0, "nu": 0.3, "kappa": 1.0, "alpha": 1.0, "T0": 0.0}},
        "bcs": [{"field": "T", "kind": "neumann", "where": "immersed", "value": 10.0},
                {"field": "T", "kind": "dirichlet", "where": "right", "value": 1.0},
                {"field": "u", "kind": "dirichlet", "where": "left", "value": 0.0, "components": [0]},
                {"field": "u", "kind": "dirichlet", "where": "bottom", "value": 0.0, "components": [1]}],
        "reference": {"kind": "self", "extra_levels": 2},
    }


register(Study("elliptic_hole", "thermo-elastic plate with an elliptic hole, fine-mesh reference",
               _ellipse_defaults))


# ---- two_material_plate ----------------------------------------------------------

def _plate_defaults() -> dict:
    return {
        "study": "two_material_plate",
        "mesh": {"counts": [20, 10], "bounds": [[0.0, 0.0], [2.0, 1.0]]},
        "fields": {"T": {"degree": 2, "ai": 0}, "u": {"degree": 2, "ai": 1}},
        "refinement": {"uniform": [0], "local": [3],
                       "criteria": [{"field": "u", "kind": "band", "c": 2.0},
                                    {"field": "T", "kind": "boundary", "c": 2.0,
                                     "segment": [[0.0, 0.0], [0.0, 1.0]]}]},
        "union_level": 3,
        "geometry": {"kind": "circle", "center": [1.0132, 0.4871], "radius": 0.3071},
        "materials": {0: {"E": 1.0, "nu": 0.3, "kappa": 1.0, "alpha": 1e-5, "T0": 0.0},
                      1: {"E": 1.0, "nu": 0.3, "kappa": 1.0, "alpha": 1e-4, "T0": 0.0}},
        "bcs": [{"field": "T", "kind": "neumann", "where": "left", "value": "100.0 * sin(10.0 * y) + 110.0"},
                {"field": "T", "kind": "dirichlet", "where": "right", "value": 0.0},
                {"field": "u", "kind": "dirichlet", "where": "left", "value": 0.0}],
        "reference": {"kind": "self", "level": 3, "degree_increase": 1},
    }


def _plate_metrics(cfg: StudyConfig, sols: dict, ref: dict, n_dof: int, h: float) -> list[StepRecord]:
    err = interface_von_mises_error(sols["u"], sols.get("T"), ref["u"], ref.get("T"), cfg.material_phases(),
                                    cfg.weak_form_config().plane)
    return [StepRecord(0, "von_mises_interface", n_dof, h, err["L2"], float("nan"))]


register(Study("two_material_plate", "two-material thermo-elastic plate, per-field local refinement",
               _plate_defaults, metrics=_plate_metrics))


# ---- geometry and refinement -------------------------------------------------------

def build_geometry(spec: dict) -> LevelSetGeometry:
    """Level-set geometry from a config mapping."""
    kind = spec.get("kind", "none")
    void = spec.get("void", ())
    if kind == "none":
        return LevelSetGeometry.single(lambda x, y: -1.0 + 0.0 * x, void)
    if kind == "half_plane":
        return LevelSetGeometry.single(half_plane(spec["point"], spec["angle"]), void)
    if kind == "circle":
        return LevelSetGeometry.single(circle(spec["center"], spec["radius"]), void)
    if kind == "ellipse":
        return LevelSetGeometry.single(ellipse(spec["center"], spec["a"], spec["b"]), void)
    if kind == "lshape":
        return lshape_geometry(spec.get("half_width", 1.0))
    if kind == "lattice_csv":
        sets = load_lattice_csv(spec["path"], spec["origin"], spec["spacing"])
        return LevelSetGeometry.single(sets[spec.get("index", 0)], void)
    raise ConfigError(f"unknown geometry kind {kind!r}")


def _segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    t = 0.0 if not d.any() else float(np.clip((p - a) @ d / (d @ d), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def cell_matches(forest: PolyTreeForest, cell, crit: Criterion, geometry: LevelSetGeometry) -> bool:
    """Whether a cell satisfies a local refinement criterion."""
    lo, hi = forest.cell_bounds(cell)
    h = float(np.max(hi - lo))
    if crit.kind == "box":
        x0, y0, x1, y1 = crit.box
        return bool(lo[0] <= x1 and hi[0] >= x0 and lo[1] <= y1 and hi[1] >= y0)
    if crit.kind == "boundary":
        center = 0.5 * (lo + hi)
        reach = crit.c * h + 0.5 * float(np.linalg.norm(hi - lo))
        return _segment_distance(center, *crit.segment) <= reach
    if crit.kind == "band":
        t = np.linspace(0.0, 1.0, 3)
        pts = lo + np.stack(np.meshgrid(t, t), axis=-1).reshape(-1, 2) * (hi - lo)
        vals = geometry.values(pts)
        if crit.level_set is not None:
            vals = vals[:, [crit.level_set]]
        near = np.any(np.abs(vals) < crit.c * h, axis=0)
        crosses = (vals.min(axis=0) < 0) & (vals.max(axis=0) > 0)
        return bool(np.any(near | crosses))
    raise ConfigError(f"unknown refinement criterion {crit.kind!r}")


def build_forest(cfg: StudyConfig, uniform: int, local: int, geometry: LevelSetGeometry,
                 fixed: bool = True) -> PolyTreeForest:
    """Forest of one step: uniform levels, then local passes per activation index.

    Fields with ``fixed_level`` ignore the step schedule unless ``fixed`` is
    false.
    """
    (x0, y0), (x1, y1) = cfg.mesh.bounds
    ais = {cfg.field_ai(n): n for n in reversed(list(cfg.fields))}
    forest = init_base(cfg.mesh.counts[0], cfg.mesh.counts[1], ((x0, y0), (x1, y1)), n_ai=max(ais) + 1)
    b = cfg.b_buffer
    for ai in sorted(ais):
        fc = cfg.fields[ais[ai]]
        levels, passes = uniform, local
        if fixed and fc.fixed_level is not None:
            levels, passes = fc.fixed_level, 0
        for _ in range(levels):
            forest.refine_for_ai(ai, forest.active_mesh(ai), b)
        crits = [c for c in cfg.refinement.criteria if cfg.field_ai(c.field) == ai]
        for _ in range(passes if crits else 0):
            flags = [c for c in forest.active_mesh(ai)
                     if any(cell_matches(forest, c, k, geometry) for k in crits)]
            if flags:
                forest.refine_for_ai(ai, flags, b)
    return forest


# ---- one discretization and solve ----------------------------------------------------

def _bc_value(value, exact: ExactFn | None):
    if isinstance(value, str):
        if value == "exact":
            if exact is None:
                raise ConfigError("boundary value 'exact' needs a study with an analytic solution")
            return lambda X: exact(X)[0]
        expr = compile(value, "<bc>", "eval")

        def f(X, expr=expr):
            env = dict(_EXPR_NAMES, x=X[:, 0], y=X[:, 1])
            return np.asarray(eval(expr, {"__builtins__": {}}, env), dtype=float) * np.ones(len(X))

        return f
    return value


def solve_case(cfg: StudyConfig, study: Study, geometry: LevelSetGeometry, forest: PolyTreeForest,
               degree_increase: int = 0) -> tuple[Discretization, dict[str, FieldSolution]]:
    """Discretize every field on a forest and solve (temperature first)."""
    specs = {n: FieldSpec(cfg.field_ai(n), f.degree + degree_increase, N_COMP[n]) for n, f in cfg.fields.items()}
    disc = discretize(forest, geometry, specs, geom_refine=cfg.geom_refine, min_level=cfg.union_level or 0)
    materials = cfg.material_phases()
    wf = cfg.weak_form_config()
    exact = study.exact(cfg)
    sources = study.sources(cfg)
    sols: dict[str, FieldSolution] = {}
    for name in ("T", "u"):
        if name not in specs:
            continue
        bcs = [BoundaryCondition(b.kind, b.where, _bc_value(b.value, exact.get(name)),
                                 tuple(b.components) if b.components is not None else None)
               for b in cfg.bcs if b.field == name]
        system = assemble(disc.spaces[name], materials, bcs, wf, source=sources.get(name),
                          temperature=sols.get("T"))
        sols[name] = FieldSolution(disc.spaces[name], solve_system(system).x)
    return disc, sols


def _field_h(cfg: StudyConfig, forest: PolyTreeForest, name: str) -> float:
    return float(np.max(forest.h(forest.max_level(cfg.field_ai(name)))))


def _same_union(a: Discretization, b: Discretization) -> bool:
    return a.union.cells == b.union.cells


def reference_levels(cfg: StudyConfig) -> tuple[int, int]:
    """Uniform levels and local passes of the self-reference run."""
    rc = cfg.reference
    if rc.level is not None:
        return rc.level, 0
    u_last, l_last = cfg.step_levels(cfg.n_steps - 1)
    return u_last + rc.extra_levels, (l_last + rc.extra_levels if l_last else 0)


def solve_reference(cfg: StudyConfig) -> tuple[Discretization, dict[str, FieldSolution]]:
    """Discretize and solve the self-reference of a config."""
    geometry = build_geometry(cfg.geometry)
    forest = build_forest(cfg, *reference_levels(cfg), geometry)
    return solve_case(cfg, get_study(cfg.study), geometry, forest, cfg.reference.degree_increase)


def run_study(cfg: StudyConfig, reference: tuple[Discretization, dict] | None = None) -> StudyReport:
    """Run every refinement step and collect errors per field.

    ``reference`` reuses a solved self-reference (see ``solve_reference``),
    for instance across several configs sharing one.
    """
    errs = validate(cfg)
    if errs:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errs))
    study = get_study(cfg.study)
    geometry = build_geometry(cfg.geometry)
    report = StudyReport(cfg.study)
    ref = None
    if cfg.reference.kind == "self":
        t0 = time.perf_counter()
        ref = reference if reference is not None else solve_reference(cfg)
        report.info["reference"] = {"levels": list(reference_levels(cfg)),
                                    "n_dof": {n: ref[0].n_dof(n) for n in cfg.fields},
                                    "seconds": time.perf_counter() - t0}
    exact = study.exact(cfg)
    for step in range(cfg.n_steps):
        t0 = time.perf_counter()
        forest = build_forest(cfg, *cfg.step_levels(step), geometry)
        disc, sols = solve_case(cfg, study, geometry, forest)
        rows = []
        for name in cfg.fields:
            if ref is not None:
                if not _same_union(disc, ref[0]):
                    raise ConfigError("reference and step meshes differ; set union_level to the finest level")
                e = error_norms(sols[name], ref[1][name])
            elif name in exact:
                e = error_norms(sols[name], exact[name])
            else:
                e = {"L2": float("nan"), "H1": float("nan")}
            rows.append(StepRecord(step, name, disc.n_dof(name), _field_h(cfg, forest, name),
                                   float(e["L2"]), float(e["H1"])))
        if study.metrics is not None and ref is not None:
            total = sum(disc.n_dof(n) for n in cfg.fields)
            h = min(_field_h(cfg, forest, n) for n in cfg.fields)
            for r in study.metrics(cfg, sols, ref[1], total, h):
                r.step = step
                rows.append(r)
        seconds = time.perf_counter() - t0
        for r in rows:
            r.seconds = seconds
        report.records.extend(rows)
        report.solutions = sols
        log.info("step %d: %s (%.1f s)", step, ", ".join(f"{r.field} {r.n_dof} dofs L2 {r.err_L2:.3e}"
                                                          for r in rows), seconds)
    return report


def list_studies() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in sorted(STUDIES.values(), key=lambda s: s.name)]

"""Declarative study configuration.

A study is described by one YAML document. Every key has a default supplied
by the built-in study named in ``study``; the document and ``--set`` overrides
are merged on top of it. Schema (all sections optional except ``study``)::

    study: bar2d                    # built-in study name
    mesh:
      counts: [8, 4]                # level-0 cells
      bounds: [[0, 0], [1, 0.5]]
    fields:                         # per field: degree, activation index,
      u: {degree: 2, ai: 0}         # optional fixed uniform level
    refinement:
      uniform: [0, 1, 2]            # uniform levels per step
      local: [0, 0, 0]              # local passes per step (same length or empty)
      b_buffer: null                # null: the largest field degree
      criteria:                     # applied on every local pass
        - {field: u, kind: band, c: 2.0}
    union_level: null               # shared union level (all steps)
    geom_refine: 0
    geometry: {kind: half_plane, point: [0.5, 0.25], angle: 1.57}
    materials: {0: {E: 1.0, nu: 0.0}}
    bcs:
      - {field: u, kind: dirichlet, where: left, value: 0.0}
    weak_form: {c_I_u: null, ghost: true, plane: stress}
    reference: {kind: analytic}     # or {kind: self, extra_levels: 2, degree_increase: 0,
                                    #     level: null}  (level: fixed uniform level)
    params: {}                      # study-specific values
    output: {dir: out, timings: false, export_fields: false}

Boundary values are numbers, lists of numbers, expressions in ``x`` and
``y`` (numpy functions allowed), or ``exact`` for the study's exact solution.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..errors import ConfigError
from ..physics.materials import MaterialPhase, WeakFormConfig

CRITERIA = ("band", "box", "boundary")
GEOMETRIES = ("none", "half_plane", "circle", "ellipse", "lshape", "lattice_csv")


@dataclass
class FieldConfig:
    degree: int = 1
    ai: int | None = None
    fixed_level: int | None = None


@dataclass
class Criterion:
    """Local refinement rule for one field.

    ``band``: cells where some level set satisfies ``|phi| < c * h``.
    ``box``: cells meeting the closed box ``[x0, y0, x1, y1]`` (a point if
    degenerate). ``boundary``: cells within ``c * h`` of a segment.
    """

    field: str
    kind: str
    c: float = 2.0
    level_set: int | None = None
    box: list[float] | None = None
    segment: list[list[float]] | None = None


@dataclass
class Refinement:
    uniform: list[int] = field(default_factory=lambda: [0])
    local: list[int] = field(default_factory=list)
    b_buffer: int | None = None
    criteria: list[Criterion] = field(default_factory=list)


@dataclass
class MeshConfig:
    counts: list[int] = field(default_factory=lambda: [4, 4])
    bounds: list[list[float]] = field(default_factory=lambda: [[0.0, 0.0], [1.0, 1.0]])


@dataclass
class BcConfig:
    field: str
    kind: str
    where: str
    value: Any = 0.0
    components: list[int] | None = None


@dataclass
class ReferenceConfig:
    kind: str = "analytic"
    extra_levels: int = 2
    degree_increase: int = 0
    level: int | None = None


@dataclass
class OutputConfig:
    dir: str = "out"
    timings: bool = False
    export_fields: bool = False


@dataclass
class StudyConfig:
    study: str
    mesh: MeshConfig = field(default_factory=MeshConfig)
    fields: dict[str, FieldConfig] = field(default_factory=dict)
    refinement: Refinement = field(default_factory=Refinement)
    union_level: int | None = None
    geom_refine: int = 0
    geometry: dict[str, Any] = field(default_factory=lambda: {"kind": "none"})
    materials: dict[int, dict[str, float]] = field(default_factory=dict)
    bcs: list[BcConfig] = field(default_factory=list)
    weak_form: dict[str, Any] = field(default_factory=dict)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    params: dict[str, Any] = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def n_steps(self) -> int:
        return max(len(self.refinement.uniform), len(self.refinement.local))

    @property
    def b_buffer(self) -> int:
        """Buffer width: the configured value or the largest field degree."""
        top = max((f.degree for f in self.fields.values()), default=1)
        if self.reference.kind == "self":
            top += self.reference.degree_increase
        return self.refinement.b_buffer if self.refinement.b_buffer is not None else top

    def field_ai(self, name: str) -> int:
        f = self.fields[name]
        return f.ai if f.ai is not None else list(self.fields).index(name)

    def step_levels(self, step: int) -> tuple[int, int]:
        """Uniform levels and local passes of a step."""
        r = self.refinement
        u = r.uniform[step] if r.uniform else 0
        lo = r.local[step] if r.local else 0
        return u, lo

    def material_phases(self) -> dict[int, MaterialPhase]:
        return {int(k): MaterialPhase(**v) for k, v in self.materials.items()}

    def weak_form_config(self) -> WeakFormConfig:
        return WeakFormConfig(**self.weak_form)


# ---- dict conversion -------------------------------------------------------

def to_dict(cfg: StudyConfig) -> dict:
    """Plain nested dict with YAML-friendly types."""
    return dataclasses.asdict(cfg)


def from_dict(data: dict) -> StudyConfig:
    """Build a config from a nested dict, rejecting unknown keys."""
    data = copy.deepcopy(data)
    if not isinstance(data, dict) or "study" not in data:
        raise ConfigError("config needs a 'study' key")
    _check_keys(data, StudyConfig, "")
    try:
        mesh = _make(MeshConfig, data.pop("mesh", {}) or {}, "mesh")
        fields = {str(k): _make(FieldConfig, v, f"fields.{k}") for k, v in (data.pop("fields", {}) or {}).items()}
        ref = dict(data.pop("refinement", {}) or {})
        ref["criteria"] = [_make(Criterion, c, "refinement.criteria") for c in ref.get("criteria") or []]
        refinement = _make(Refinement, ref, "refinement")
        bcs = [_make(BcConfig, b, "bcs") for b in data.pop("bcs", []) or []]
        reference = _make(ReferenceConfig, data.pop("reference", {}) or {}, "reference")
        output = _make(OutputConfig, data.pop("output", {}) or {}, "output")
        materials = {int(k): dict(v) for k, v in (data.pop("materials", {}) or {}).items()}
        return StudyConfig(mesh=mesh, fields=fields, refinement=refinement, bcs=bcs, reference=reference,
                           output=output, materials=materials, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _make(cls, value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping")
    _check_keys(value, cls, where)
    return cls(**value)


def _check_keys(data: dict, cls, where: str) -> None:
    names = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(map(str, data)) - names)
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in {where or 'config'}")


def dump_yaml(cfg: StudyConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def load_yaml(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


# ---- overrides ---------------------------------------------------------------

def apply_override(data: dict, assignment: str) -> dict:
    """Set ``path.to.key=value`` in a nested dict; the value is parsed as YAML.

    Integer path parts index into lists.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, raw = assignment.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError("empty override path")
    value = yaml.safe_load(raw) if raw.strip() else None
    node: Any = data
    for k in keys[:-1]:
        node = _child(node, k, create=True)
    last = keys[-1]
    if isinstance(node, list):
        node[_list_index(node, last)] = value
    else:
        node[_key(node, last)] = value
    return data


def _key(node: dict, k: str):
    if k in node:
        return k
    if k.lstrip("-").isdigit() and int(k) in node:
        return int(k)
    return k


def _list_index(node: list, k: str) -> int:
    try:
        i = int(k)
    except ValueError as exc:
        raise ConfigError(f"list index expected, got {k!r}") from exc
    if not -len(node) <= i < len(node):
        raise ConfigError(f"list index {i} out of range")
    return i


def _child(node, k: str, create: bool):
    if isinstance(node, list):
        return node[_list_index(node, k)]
    if not isinstance(node, dict):
        raise ConfigError(f"cannot descend into {k!r}")
    key = _key(node, k)
    if key not in node or node[key] is None:
        if not create:
            raise ConfigError(f"missing key {k!r}")
        node[key] = {}
    return node[key]


def deep_merge(base: dict, top: dict) -> dict:
    """``top`` merged into a copy of ``base``; mappings merge, other values replace."""
    out = copy.deepcopy(base)
    for k, v in top.items():
        key = _key(out, str(k)) if isinstance(k, str) else k
        if isinstance(v, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], v)
        else:
            out[key] = copy.deepcopy(v)
    return out


# ---- validation ----------------------------------------------------------------

def validate(cfg: StudyConfig) -> list[str]:
    """List of problems; empty when the config is runnable."""
    errs = []
    if len(cfg.mesh.counts) != 2 or min(cfg.mesh.counts) < 1:
        errs.append("mesh.counts must be two positive integers")
    b = cfg.mesh.bounds
    if len(b) != 2 or any(len(v) != 2 for v in b) or not (b[1][0] > b[0][0] and b[1][1] > b[0][1]):
        errs.append("mesh.bounds must be [[x0, y0], [x1, y1]] with positive extent")
    if not cfg.fields:
        errs.append("at least one field is required")
    for name, f in cfg.fields.items():
        if name not in ("T", "u"):
            errs.append(f"field {name!r}: only 'T' (temperature) and 'u' (displacement) are supported")
        if not 1 <= f.degree <= 4:
            errs.append(f"field {name!r}: degree must be in 1..4")
    r = cfg.refinement
    if cfg.n_steps < 1:
        errs.append("refinement schedule is empty")
    if r.uniform and r.local and len(r.uniform) != len(r.local):
        errs.append("refinement.uniform and refinement.local must have the same length")
    if any(v < 0 for v in list(r.uniform) + list(r.local)):
        errs.append("refinement levels must be non-negative")
    top = max(f.degree for f in cfg.fields.values()) if cfg.fields else 1
    if r.b_buffer is not None and r.b_buffer < top:
        errs.append(f"refinement.b_buffer must be at least the largest degree {top}")
    for c in r.criteria:
        if c.kind not in CRITERIA:
            errs.append(f"unknown refinement criterion {c.kind!r}")
        if c.field not in cfg.fields:
            errs.append(f"refinement criterion names unknown field {c.field!r}")
        if c.kind == "box" and (c.box is None or len(c.box) != 4):
            errs.append("box criterion needs box: [x0, y0, x1, y1]")
        if c.kind == "boundary" and (c.segment is None or len(c.segment) != 2):
            errs.append("boundary criterion needs segment: [[x0, y0], [x1, y1]]")
    if r.local and any(r.local) and not r.criteria:
        errs.append("local refinement passes need at least one criterion")
    if cfg.geometry.get("kind", "none") not in GEOMETRIES:
        errs.append(f"unknown geometry kind {cfg.geometry.get('kind')!r}")
    for bc in cfg.bcs:
        if bc.field not in cfg.fields:
            errs.append(f"boundary condition names unknown field {bc.field!r}")
        if bc.kind not in ("dirichlet", "neumann"):
            errs.append(f"unknown boundary condition kind {bc.kind!r}")
        if bc.where not in ("left", "right", "top", "bottom", "immersed"):
            errs.append(f"unknown boundary location {bc.where!r}")
    for k, m in cfg.materials.items():
        try:
            MaterialPhase(**m)
        except (TypeError, ValueError) as exc:
            errs.append(f"material {k}: {exc}")
    try:
        cfg.weak_form_config()
    except (TypeError, ValueError) as exc:
        errs.append(f"weak_form: {exc}")
    if cfg.reference.kind not in ("analytic", "self"):
        errs.append(f"unknown reference kind {cfg.reference.kind!r}")
    if cfg.geom_refine < 0 or (cfg.union_level is not None and cfg.union_level < 0):
        errs.append("geom_refine and union_level must be non-negative")
    return errs

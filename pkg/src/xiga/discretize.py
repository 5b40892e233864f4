"""Pipeline from a refined forest and a geometry to enriched field spaces."""

from __future__ import annotations

from dataclasses import dataclass, field

from .enrichment import build_enriched_dofs, compute_enrichment_levels
from .extraction import UnionMesh, build_extraction, build_union
from .geometry import IntegrationMesh, LevelSetGeometry, build_integration_mesh
from .physics.fields import FieldSpace
from .polytree import PolyTreeForest
from .thb import ThbBasis, build_hierarchical, build_thb


@dataclass(frozen=True)
class FieldSpec:
    """A field: activation index, degree and number of components."""

    ai: int
    degree: int
    ncomp: int = 1


@dataclass
class Discretization:
    forest: PolyTreeForest
    union: UnionMesh
    mesh: IntegrationMesh
    bases: dict[str, ThbBasis] = field(default_factory=dict)
    spaces: dict[str, FieldSpace] = field(default_factory=dict)

    def n_dof(self, name: str) -> int:
        return self.spaces[name].n_dof


def discretize(forest: PolyTreeForest, geometry: LevelSetGeometry, fields: dict[str, FieldSpec],
               geom_refine: int = 0, min_level: int = 0, truncated: bool = True) -> Discretization:
    """Bases, union mesh, cut integration mesh and enriched spaces of all fields."""
    ais = sorted({f.ai for f in fields.values()})
    union = build_union(forest, ais, geom_refine=geom_refine, min_level=min_level)
    mesh = build_integration_mesh(union, geometry)
    build = build_thb if truncated else build_hierarchical
    out = Discretization(forest, union, mesh)
    for name, spec in fields.items():
        basis = build(forest, spec.ai, spec.degree)
        enr = compute_enrichment_levels(build_extraction(union, basis), mesh)
        out.bases[name] = basis
        out.spaces[name] = FieldSpace(name, build_enriched_dofs({name: (enr, spec.ncomp)}), mesh)
    return out

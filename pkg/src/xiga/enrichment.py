"""Generalized Heaviside enrichment and the global unknown numbering.

A basis function is copied once for each connected same-phase region group
inside its support. Connectivity runs through region adjacency of nonzero
measure, so regions touching only at a corner stay apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import PreconditionError
from .extraction import FieldExtraction, lagrange_basis_2d
from .geometry import IntegrationMesh


@dataclass
class FieldEnrichment:
    """Enrichment levels of one field.

    Attributes:
        extraction: the field's extraction data on the union mesh.
        n_levels: ``L_j`` per function (0 for functions living only in void).
        level_start: first enriched-function index of each function.
        region_slots: per region, the enriched-function index of each column
            of the cell's extraction operator (empty for void regions).
        level_regions: per enriched function, the regions it covers.
    """

    extraction: FieldExtraction
    n_levels: np.ndarray
    level_start: np.ndarray
    region_slots: list[np.ndarray]
    level_regions: list[np.ndarray]

    @property
    def n_enriched(self) -> int:
        return int(self.n_levels.sum())


def compute_enrichment_levels(extraction: FieldExtraction, mesh: IntegrationMesh) -> FieldEnrichment:
    """Connected components of each function's support regions."""
    void = mesh.geometry.void
    n_reg = len(mesh.regions)
    phases = mesh.region_phase
    cells = mesh.region_cell
    # (function, region) nodes
    reg_ids = np.array([r for r in range(n_reg) if phases[r] not in void], dtype=np.int64)
    counts = np.array([len(extraction.funcs[cells[r]]) for r in reg_ids], dtype=np.int64)
    node_fn = (np.concatenate([extraction.funcs[cells[r]] for r in reg_ids])
               if len(reg_ids) else np.zeros(0, dtype=np.int64))
    node_reg = np.repeat(reg_ids, counts)
    keys = node_fn * n_reg + node_reg
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    def lookup(k):
        pos = np.searchsorted(sorted_keys, k)
        pos = np.minimum(pos, len(sorted_keys) - 1)
        hit = sorted_keys[pos] == k
        return order[pos], hit

    # edges between (j, r) and (j, s) for adjacent regions r, s
    rows, cols = [], []
    adj = np.array(mesh.adjacency, dtype=np.int64).reshape(-1, 2)
    adj = adj[~np.isin(phases[adj[:, 0]], list(void))] if len(void) else adj
    if len(adj):
        lens = np.array([len(extraction.funcs[cells[r]]) for r in adj[:, 0]], dtype=np.int64)
        fr = np.concatenate([extraction.funcs[cells[r]] for r in adj[:, 0]])
        ra = np.repeat(adj[:, 0], lens)
        rb = np.repeat(adj[:, 1], lens)
        na, ha = lookup(fr * n_reg + ra)
        nb, hb = lookup(fr * n_reg + rb)
        ok = ha & hb
        rows, cols = na[ok], nb[ok]
    n_nodes = len(node_fn)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_nodes))
    _, label = connected_components(graph, directed=False)

    n_fn = extraction.basis.n_functions
    # deterministic level order: by function, then smallest region in the component
    first_reg = np.full(label.max() + 1 if n_nodes else 0, np.iinfo(np.int64).max)
    np.minimum.at(first_reg, label, node_reg)
    comp_fn = np.zeros(len(first_reg), dtype=np.int64)
    comp_fn[label] = node_fn
    comp_order = np.lexsort((first_reg, comp_fn))
    comp_rank = np.empty_like(comp_order)
    comp_rank[comp_order] = np.arange(len(comp_order))
    n_levels = np.bincount(comp_fn, minlength=n_fn).astype(np.int64)
    level_start = np.concatenate([[0], np.cumsum(n_levels)[:-1]]).astype(np.int64)
    node_slot = comp_rank[label]  # enriched-function index of each node

    region_slots: list[np.ndarray] = [np.zeros(0, dtype=np.int64) for _ in range(n_reg)]
    start = 0
    for r, cnt in zip(reg_ids, counts):
        region_slots[r] = node_slot[start:start + cnt]
        start += cnt
    level_regions = [[] for _ in range(int(n_levels.sum()))]
    for slot, r in zip(node_slot, node_reg):
        level_regions[slot].append(int(r))
    level_regions = [np.unique(np.array(v, dtype=np.int64)) for v in level_regions]
    return FieldEnrichment(extraction, n_levels, level_start, region_slots, level_regions)


@dataclass
class EnrichedDofTable:
    """Global unknowns ordered by (field, function, level, component)."""

    names: list[str]
    enrichments: list[FieldEnrichment]
    components: list[int]
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        sizes = [e.n_enriched * c for e, c in zip(self.enrichments, self.components)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    @property
    def n_dof(self) -> int:
        return int(self.offsets[-1])

    def field_index(self, name: str) -> int:
        return self.names.index(name)

    def field_size(self, name: str) -> int:
        k = self.field_index(name)
        return int(self.offsets[k + 1] - self.offsets[k])

    def region_dofs(self, name: str, region: int) -> np.ndarray:
        """Global unknowns ``(n_funcs, n_comp)`` of a field on a region."""
        k = self.field_index(name)
        nc = self.components[k]
        slots = self.enrichments[k].region_slots[region]
        return self.offsets[k] + nc * slots[:, None] + np.arange(nc)[None, :]

    def dof_key(self, dof: int) -> tuple[str, int, int, int]:
        """``(field, function, level, component)`` of a global unknown."""
        k = int(np.searchsorted(self.offsets, dof, side="right") - 1)
        e, nc = self.enrichments[k], self.components[k]
        local = dof - self.offsets[k]
        slot, comp = divmod(int(local), nc)
        fn = int(np.searchsorted(e.level_start, slot, side="right") - 1)
        while e.n_levels[fn] == 0 or slot >= e.level_start[fn] + e.n_levels[fn]:
            fn += 1
        return self.names[k], fn, slot - int(e.level_start[fn]), comp


def build_enriched_dofs(fields: dict[str, tuple[FieldEnrichment, int]]) -> EnrichedDofTable:
    """Number unknowns for fields given as ``name -> (enrichment, n_components)``."""
    names = list(fields)
    return EnrichedDofTable(names, [fields[n][0] for n in names], [fields[n][1] for n in names])


def evaluate_enriched_field(dofs: EnrichedDofTable, coeffs, name: str, points,
                            mesh: IntegrationMesh, regions=None):
    """Values ``(n, n_comp)`` and gradients ``(n, n_comp, 2)`` at points.

    ``regions`` may give the region of each point; otherwise it is located.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    regs = mesh.locate(pts) if regions is None else np.asarray(regions)
    k = dofs.field_index(name)
    enr = dofs.enrichments[k]
    ext = enr.extraction
    p = ext.basis.degree
    nc = dofs.components[k]
    coeffs = np.asarray(coeffs, dtype=float)
    val = np.zeros((len(pts), nc))
    grad = np.zeros((len(pts), nc, 2))
    for r in np.unique(regs):
        if r < 0 or mesh.regions[r].phase in mesh.geometry.void:
            raise PreconditionError("field evaluated in a void phase")
        sel = regs == r
        c = mesh.regions[r].cell
        lo, hi = mesh.union.bounds(c)
        h = hi - lo
        uv = (pts[sel] - lo) / h
        T = ext.T[c]
        cf = coeffs[dofs.region_dofs(name, r)]  # (nf, nc)
        val[sel] = lagrange_basis_2d(p, uv) @ T @ cf
        grad[sel, :, 0] = lagrange_basis_2d(p, uv, (1, 0)) @ T @ cf / h[0]
        grad[sel, :, 1] = lagrange_basis_2d(p, uv, (0, 1)) @ T @ cf / h[1]
    return val, grad

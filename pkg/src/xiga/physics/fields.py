"""Discrete field spaces on an integration mesh and their solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..enrichment import EnrichedDofTable, evaluate_enriched_field
from ..errors import PreconditionError
from ..extraction import FieldExtraction, lagrange_basis_2d
from ..geometry import IntegrationMesh


@dataclass
class FieldSpace:
    """One enriched field (scalar or vector) with its own unknown numbering."""

    name: str
    dofs: EnrichedDofTable
    mesh: IntegrationMesh

    @property
    def extraction(self) -> FieldExtraction:
        return self.dofs.enrichments[self.dofs.field_index(self.name)].extraction

    @property
    def degree(self) -> int:
        return self.extraction.basis.degree

    @property
    def ncomp(self) -> int:
        return self.dofs.components[self.dofs.field_index(self.name)]

    @property
    def n_dof(self) -> int:
        return self.dofs.n_dof

    def is_void(self, region: int) -> bool:
        return self.mesh.regions[region].phase in self.mesh.geometry.void

    def region_dofs(self, region: int) -> np.ndarray:
        """Flat local unknowns of a region, ordered ``(function, component)``."""
        return self.dofs.region_dofs(self.name, region).ravel()

    def n_funcs(self, region: int) -> int:
        return len(self.extraction.funcs[self.mesh.regions[region].cell])

    def _frames(self, regions):
        cells = [self.mesh.regions[r].cell for r in regions]
        lows, highs = zip(*(self.mesh.union.bounds(c) for c in cells))
        lo = np.array(lows)
        return cells, lo, np.array(highs) - lo

    def shapes(self, regions, pts):
        """Values ``(R, nq, nf)`` and gradients ``(R, nq, nf, 2)`` at points ``(R, nq, 2)``.

        All regions must carry the same number of functions.
        """
        cells, lo, h = self._frames(regions)
        T = np.stack([self.extraction.T[c] for c in cells])
        uv = (pts - lo[:, None, :]) / h[:, None, :]
        p = self.degree
        N = np.einsum("rql,rlf->rqf", lagrange_basis_2d(p, uv), T)
        gx = np.einsum("rql,rlf->rqf", lagrange_basis_2d(p, uv, (1, 0)), T) / h[:, None, None, 0]
        gy = np.einsum("rql,rlf->rqf", lagrange_basis_2d(p, uv, (0, 1)), T) / h[:, None, None, 1]
        return N, np.stack([gx, gy], axis=-1)

    def derivative(self, region: int, pts, order: tuple[int, int]) -> np.ndarray:
        """Partial derivative ``(nq, nf)`` of the region's functions."""
        _, lo, h = self._frames([region])
        uv = (np.asarray(pts) - lo[0]) / h[0]
        scale = h[0, 0] ** order[0] * h[0, 1] ** order[1]
        c = self.mesh.regions[region].cell
        return lagrange_basis_2d(self.degree, uv, order) @ self.extraction.T[c] / scale

    def group_by_size(self, regions) -> dict[int, np.ndarray]:
        """Regions grouped by their number of functions."""
        regions = np.asarray(regions, dtype=np.int64)
        nf = np.array([self.n_funcs(r) for r in regions], dtype=np.int64)
        return {int(k): regions[nf == k] for k in np.unique(nf)}


@dataclass
class FieldSolution:
    """Coefficients of a solved field."""

    space: FieldSpace
    coeffs: np.ndarray

    def region_values(self, regions, pts):
        """Values ``(R, nq, nc)`` and gradients ``(R, nq, nc, 2)`` on regions."""
        regions = np.asarray(regions, dtype=np.int64)
        pts = np.asarray(pts, dtype=float)
        nc = self.space.ncomp
        val = np.zeros(pts.shape[:2] + (nc,))
        grad = np.zeros(pts.shape[:2] + (nc, 2))
        index = {int(r): n for n, r in enumerate(regions)}
        for regs in self.space.group_by_size(regions).values():
            if any(self.space.is_void(r) for r in regs):
                raise PreconditionError("field evaluated in a void phase")
            rows = np.array([index[int(r)] for r in regs])
            N, dN = self.space.shapes(regs, pts[rows])
            cf = np.stack([self.coeffs[self.space.dofs.region_dofs(self.space.name, r)] for r in regs])
            val[rows] = np.einsum("rqf,rfc->rqc", N, cf)
            grad[rows] = np.einsum("rqfd,rfc->rqcd", dN, cf)
        return val, grad

    def evaluate(self, points, regions=None):
        """Values ``(n, nc)`` and gradients ``(n, nc, 2)`` at arbitrary points."""
        return evaluate_enriched_field(self.space.dofs, self.coeffs, self.space.name, points,
                                       self.space.mesh, regions)

"""Weak-form assembly for steady heat conduction and thermo-elasticity.

Both fields use the same operator layout. For a local unknown ``a`` (a
function/component pair) ``Phi[q, a, i]`` is its value component ``i`` and
``G[q, a, i, d]`` its gradient. The flux tensor ``S`` is ``kappa * G`` for heat
conduction and the Cauchy stress for elasticity, so the bulk form is
``sum w S : G`` and the normal flux is ``S @ n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from ..errors import ConfigError, SequencingError
from ..quadrature import gauss_square, map_segments, map_triangles
from .fields import FieldSolution, FieldSpace
from .materials import MaterialPhase, WeakFormConfig, interface_penalty, interface_weights

log = logging.getLogger(__name__)

BOX_SIDES = {"bottom": 0, "right": 1, "top": 2, "left": 3}
BATCH = 256


@dataclass
class BoundaryCondition:
    """Dirichlet or Neumann data on a box side or on the immersed boundary.

    ``value`` is a constant (scalar or per component) or a callable taking
    points ``(n, 2)`` and returning ``(n,)`` or ``(n, n_comp)``. ``components``
    restricts a Dirichlet condition to some displacement components.
    """

    kind: str
    where: str
    value: float | Sequence[float] | Callable = 0.0
    components: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown boundary condition kind {self.kind!r}")
        if self.where not in BOX_SIDES and self.where != "immersed":
            raise ConfigError(f"unknown boundary location {self.where!r}")

    def values(self, pts: np.ndarray, ncomp: int) -> np.ndarray:
        v = self.value(pts) if callable(self.value) else self.value
        v = np.asarray(v, dtype=float)
        if v.ndim == 1 and v.shape[0] == len(pts) and ncomp == 1:
            v = v[:, None]
        return np.broadcast_to(v, (len(pts), ncomp)).copy()

    def mask(self, ncomp: int) -> np.ndarray:
        m = np.zeros(ncomp) if self.components is not None else np.ones(ncomp)
        for c in self.components or ():
            if not 0 <= c < ncomp:
                raise ConfigError(f"component {c} out of range")
            m[c] = 1.0
        return m


@dataclass
class LinearSystem:
    A: csr_matrix
    b: np.ndarray


class _Triplets:
    def __init__(self, n: int):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(n)

    def add(self, dofs: np.ndarray, K: np.ndarray, f: np.ndarray | None = None) -> None:
        """Scatter local matrices ``(R, m, m)`` (or ``(m, m)``) and vectors."""
        dofs = np.atleast_2d(dofs)
        K = K.reshape(len(dofs), dofs.shape[1], dofs.shape[1])
        m = dofs.shape[1]
        self.rows.append(np.repeat(dofs, m, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, m)).ravel())
        self.vals.append(K.ravel())
        if f is not None:
            np.add.at(self.rhs, dofs.ravel(), f.ravel())

    def add_rhs(self, dofs: np.ndarray, f: np.ndarray) -> None:
        np.add.at(self.rhs, np.asarray(dofs).ravel(), np.asarray(f).ravel())

    def matrix(self) -> csr_matrix:
        if not self.rows:
            return csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()


def _expand_values(N: np.ndarray, nc: int) -> np.ndarray:
    """``(..., nf)`` shape values to ``(..., nf*nc, nc)``."""
    out = N[..., :, None, None] * np.eye(nc)
    return out.reshape(N.shape[:-1] + (N.shape[-1] * nc, nc))


def _expand_grads(dN: np.ndarray, nc: int) -> np.ndarray:
    """``(..., nf, 2)`` gradients to ``(..., nf*nc, nc, 2)``."""
    out = dN[..., :, None, None, :] * np.eye(nc)[:, :, None]
    return out.reshape(dN.shape[:-2] + (dN.shape[-2] * nc, nc, 2))


class Assembler:
    """Assembles one field's linear system on an integration mesh.

    Args:
        space: the field space (1 component: heat, 2 components: elasticity).
        materials: material of every non-void phase.
        config: penalty constants and conventions.
        temperature: solved temperature for the thermal strain of an
            elastic field.
        thermal_coupling: include the thermal strain.
    """

    def __init__(self, space: FieldSpace, materials: dict[int, MaterialPhase],
                 config: WeakFormConfig | None = None, temperature: FieldSolution | None = None,
                 thermal_coupling: bool = True):
        self.space = space
        self.mesh = space.mesh
        self.cfg = config or WeakFormConfig()
        self.kind = "T" if space.ncomp == 1 else "u"
        self.p = space.degree
        self.nc = space.ncomp
        void = self.mesh.geometry.void
        for ph in range(self.mesh.geometry.n_phases):
            if ph not in void and ph not in materials:
                raise ConfigError(f"no material for phase {ph}")
        self.materials = materials
        self.coupled = (self.kind == "u" and thermal_coupling
                        and any(m.alpha != 0.0 for m in materials.values()))
        if self.coupled and temperature is None:
            raise SequencingError("thermo-elastic assembly needs the temperature solution first")
        self.temperature = temperature
        self.acc = _Triplets(space.n_dof)
        self._measures()

    # ---- material helpers ------------------------------------------------

    def modulus(self, phase: int) -> float:
        m = self.materials[phase]
        return m.kappa if self.kind == "T" else m.E

    def flux(self, G: np.ndarray, phase: int) -> np.ndarray:
        """Flux tensor ``S`` with the layout of ``G``."""
        m = self.materials[phase]
        if self.kind == "T":
            return m.kappa * G
        D = m.elasticity(self.cfg.plane)
        eps = np.stack([G[..., 0, 0], G[..., 1, 1], G[..., 0, 1] + G[..., 1, 0]], axis=-1)
        sig = eps @ D
        S = np.empty_like(G)
        S[..., 0, 0] = sig[..., 0]
        S[..., 1, 1] = sig[..., 1]
        S[..., 0, 1] = sig[..., 2]
        S[..., 1, 0] = sig[..., 2]
        return S

    def thermal_stress(self, regions, pts) -> np.ndarray:
        """Scalar ``beta * (T - T0)`` at points ``(R, nq, 2)``; zeros if uncoupled."""
        pts = np.asarray(pts)
        if not self.coupled:
            return np.zeros(pts.shape[:2])
        T, _ = self.temperature.region_values(regions, pts)
        out = np.empty(pts.shape[:2])
        for k, r in enumerate(regions):
            m = self.materials[self.mesh.regions[r].phase]
            out[k] = m.thermal_modulus(self.cfg.plane) * (T[k, :, 0] - m.T0)
        return out

    def _measures(self):
        mesh = self.mesh
        n = len(mesh.union)
        self.phase_area = np.zeros((n, mesh.geometry.n_phases))
        for reg in mesh.regions:
            self.phase_area[reg.cell, reg.phase] += reg.area
        self.gamma_len: dict[tuple[int, int, int], float] = {}
        I = mesh.interfaces
        if len(I):
            cells = mesh.region_cell[I.region_m]
            for c, m, k, L in zip(cells, I.phase_m, I.phase_n, I.length):
                key = (int(c), int(m), int(k))
                self.gamma_len[key] = self.gamma_len.get(key, 0.0) + float(L)

    def _local(self, region: int, pts: np.ndarray):
        N, dN = self.space.shapes([region], pts[None])
        return _expand_values(N[0], self.nc), _expand_grads(dN[0], self.nc)

    def _hmin(self, region: int) -> float:
        return float(self.mesh.union.size(self.mesh.regions[region].cell).min())

    # ---- bulk ------------------------------------------------------------

    def bulk(self, source: Callable | None = None) -> None:
        """Stiffness, source or body force, and thermal strain load."""
        mesh, p = self.mesh, self.p
        live = [r for r in range(len(mesh.regions)) if not self.space.is_void(r)]
        full = [r for r in live if mesh.regions[r].tris is None]
        cut = [r for r in live if mesh.regions[r].tris is not None]
        ref, wref = gauss_square(p + 2)
        for regs in self.space.group_by_size(full).values():
            for s in range(0, len(regs), BATCH):
                chunk = regs[s:s + BATCH]
                lows, sizes = [], []
                for r in chunk:
                    lo, hi = mesh.union.bounds(mesh.regions[r].cell)
                    lows.append(lo), sizes.append(hi - lo)
                lows, sizes = np.array(lows), np.array(sizes)
                X = lows[:, None, :] + ref[None] * sizes[:, None, :]
                W = wref[None, :] * np.prod(sizes, axis=1)[:, None]
                self._bulk_batch(chunk, X, W, source)
        for r in cut:
            X, W = map_triangles(mesh.regions[r].tris, 2 * p + 2)
            self._bulk_batch(np.array([r]), X[None], W[None], source)

    def _bulk_batch(self, regions, X, W, source):
        N, dN = self.space.shapes(regions, X)
        Phi = _expand_values(N, self.nc)
        G = _expand_grads(dN, self.nc)
        phases = np.array([self.mesh.regions[r].phase for r in regions])
        S = np.empty_like(G)
        for ph in np.unique(phases):
            sel = phases == ph
            S[sel] = self.flux(G[sel], int(ph))
        K = np.einsum("rq,rqaid,rqbid->rab", W, G, S, optimize=True)
        f = np.zeros(K.shape[:2])
        if source is not None:
            s = np.asarray(source(X.reshape(-1, 2)), dtype=float).reshape(X.shape[:2] + (self.nc,))
            f += np.einsum("rq,rqai,rqi->ra", W, Phi, s)
        if self.coupled:
            st = self.thermal_stress(regions, X)
            f += np.einsum("rq,rq,rqa->ra", W, st, G[..., 0, 0] + G[..., 1, 1])
        dofs = np.stack([self.space.region_dofs(r) for r in regions])
        self.acc.add(dofs, K, f)

    # ---- boundaries ------------------------------------------------------

    def boundary_items(self, where: str):
        """``(region, p0, p1, outward normal)`` of non-void boundary pieces."""
        mesh = self.mesh
        void = mesh.geometry.void
        out = []
        if where in BOX_SIDES:
            B = mesh.boundary
            if B is not None and len(B):
                for k in np.flatnonzero(B.side == BOX_SIDES[where]):
                    r = int(B.region[k])
                    if mesh.regions[r].phase not in void:
                        out.append((r, B.p0[k], B.p1[k], B.normal[k]))
        elif where == "immersed":
            I = mesh.interfaces
            for k in range(len(I)):
                vm, vn = int(I.phase_m[k]) in void, int(I.phase_n[k]) in void
                if vm and not vn:
                    out.append((int(I.region_n[k]), I.p0[k], I.p1[k], -I.normal[k]))
                elif vn and not vm:
                    out.append((int(I.region_m[k]), I.p0[k], I.p1[k], I.normal[k]))
        return out

    def neumann(self, bc: BoundaryCondition) -> None:
        """Prescribed flux ``kappa grad T . n`` or traction on a boundary."""
        for r, p0, p1, _ in self.boundary_items(bc.where):
            X, W = map_segments(p0, p1, self.p + 2)
            Phi, _ = self._local(r, X)
            g = bc.values(X, self.nc)
            self.acc.add_rhs(self.space.region_dofs(r), np.einsum("q,qai,qi->a", W, Phi, g))

    def dirichlet(self, bc: BoundaryCondition) -> None:
        """Unsymmetric Nitsche enforcement, optionally per component."""
        items = self.boundary_items(bc.where)
        if not items:
            raise ConfigError(f"Dirichlet condition on {bc.where!r} has no non-void boundary")
        P = bc.mask(self.nc)
        c = self.cfg.dirichlet_constant(self.kind, self.p)
        for r, p0, p1, n in items:
            X, W = map_segments(p0, p1, self.p + 2)
            phase = self.mesh.regions[r].phase
            Phi, G = self._local(r, X)
            Fn = self.flux(G, phase) @ n
            gamma = c * self.modulus(phase) / self._hmin(r)
            K = (-np.einsum("q,qai,i,qbi->ab", W, Phi, P, Fn)
                 + np.einsum("q,qai,i,qbi->ab", W, Fn, P, Phi)
                 + gamma * np.einsum("q,qai,i,qbi->ab", W, Phi, P, Phi))
            g = bc.values(X, self.nc) * P
            f = np.einsum("q,qai,qi->a", W, Fn + gamma * Phi, g)
            if self.coupled:
                st = self.thermal_stress([r], X[None])[0]
                f -= np.einsum("q,q,qai,i,i->a", W, st, Phi, P, n)
            self.acc.add(self.space.region_dofs(r), K, f)

    # ---- interfaces ------------------------------------------------------

    def interface(self) -> None:
        """Nitsche coupling across material interfaces."""
        mesh = self.mesh
        I = mesh.interfaces
        void = mesh.geometry.void
        cI = self.cfg.interface_constant(self.kind, self.p)
        for k in range(len(I)):
            pm, pn = int(I.phase_m[k]), int(I.phase_n[k])
            if pm in void or pn in void:
                continue
            rm, rn = int(I.region_m[k]), int(I.region_n[k])
            cm, cn = mesh.regions[rm].cell, mesh.regions[rn].cell
            am, an = self.phase_area[cm, pm], self.phase_area[cn, pn]
            km, kn = self.modulus(pm), self.modulus(pn)
            if am / km + an / kn <= 0.0:
                log.warning("interface piece %d skipped: zero combined measure", k)
                continue
            wm, wn = interface_weights(am, km, an, kn, self.cfg.weights)
            gamma = interface_penalty(cI, self.gamma_len.get((cm, pm, pn), float(I.length[k])),
                                      am, km, an, kn)
            X, W = map_segments(I.p0[k], I.p1[k], self.p + 2)
            n = I.normal[k]
            Pm, Gm = self._local(rm, X)
            Pn, Gn = self._local(rn, X)
            J = np.concatenate([Pm, -Pn], axis=1)
            A = np.concatenate([wm * (self.flux(Gm, pm) @ n), wn * (self.flux(Gn, pn) @ n)], axis=1)
            K = (-np.einsum("q,qai,qbi->ab", W, J, A)
                 + np.einsum("q,qai,qbi->ab", W, A, J)
                 + gamma * np.einsum("q,qai,qbi->ab", W, J, J))
            dofs = np.concatenate([self.space.region_dofs(rm), self.space.region_dofs(rn)])
            f = None
            if self.coupled:
                st = (wm * self.thermal_stress([rm], X[None])[0]
                      + wn * self.thermal_stress([rn], X[None])[0])
                f = -np.einsum("q,q,qai,i->a", W, st, J, n)
            self.acc.add(dofs, K, f)

    def ghost(self) -> None:
        """Penalty on jumps of the ``p``-th normal derivative across facets near cuts."""
        mesh, p = self.mesh, self.p
        factor = self.cfg.gamma_G_T if self.kind == "T" else self.cfg.gamma_G_u
        for phase in range(mesh.geometry.n_phases):
            if phase in mesh.geometry.void:
                continue
            gamma = factor * self.modulus(phase)
            for pair in mesh.ghost_facets(phase):
                f = pair.facet
                order = (p, 0) if f.axis == 0 else (0, p)
                h = min(mesh.union.size(f.a).min(), mesh.union.size(f.b).min())
                if f.axis == 0:
                    q0, q1 = np.array([f.pos, f.span[0]]), np.array([f.pos, f.span[1]])
                else:
                    q0, q1 = np.array([f.span[0], f.pos]), np.array([f.span[1], f.pos])
                # whole facet: both sides act through their polynomial extensions
                X, W = map_segments(q0, q1, p + 1)
                Da = _expand_values(self.space.derivative(pair.region_a, X, order), self.nc)
                Db = _expand_values(self.space.derivative(pair.region_b, X, order), self.nc)
                J = np.concatenate([Da, -Db], axis=1)
                dofs = np.concatenate([self.space.region_dofs(pair.region_a),
                                       self.space.region_dofs(pair.region_b)])
                self.acc.add(dofs, gamma * h ** (2 * p - 1) * np.einsum("q,qai,qbi->ab", W, J, J))

    # ---- driver ----------------------------------------------------------

    def system(self) -> LinearSystem:
        return LinearSystem(self.acc.matrix(), self.acc.rhs.copy())


def assemble(space: FieldSpace, materials: dict[int, MaterialPhase], bcs: Sequence[BoundaryCondition],
             config: WeakFormConfig | None = None, source: Callable | None = None,
             temperature: FieldSolution | None = None, thermal_coupling: bool = True) -> LinearSystem:
    """Full linear system of one field."""
    asm = Assembler(space, materials, config, temperature, thermal_coupling)
    asm.bulk(source)
    for bc in bcs:
        if bc.kind == "neumann":
            asm.neumann(bc)
        else:
            asm.dirichlet(bc)
    asm.interface()
    if asm.cfg.ghost:
        asm.ghost()
    return asm.system()


def assemble_bulk(space: FieldSpace, materials, config=None, source=None, temperature=None,
                  neumann: Sequence[BoundaryCondition] = ()) -> LinearSystem:
    """Volume terms plus Neumann loads."""
    asm = Assembler(space, materials, config, temperature)
    asm.bulk(source)
    for bc in neumann:
        asm.neumann(bc)
    return asm.system()


def assemble_nitsche_dirichlet(space: FieldSpace, materials, bc: BoundaryCondition, config=None,
                               temperature=None) -> LinearSystem:
    asm = Assembler(space, materials, config, temperature)
    asm.dirichlet(bc)
    return asm.system()


def assemble_nitsche_interface(space: FieldSpace, materials, config=None, temperature=None) -> LinearSystem:
    asm = Assembler(space, materials, config, temperature)
    asm.interface()
    return asm.system()


def assemble_ghost(space: FieldSpace, materials, config=None) -> LinearSystem:
    asm = Assembler(space, materials, config, thermal_coupling=False)
    asm.ghost()
    return asm.system()

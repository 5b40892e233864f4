"""Union background mesh and Lagrange extraction operators.

Every field's hierarchical basis is polynomial on each union cell, so it can be
written as ``B_k(x) = sum_i T[i, k] N_i(x)`` with tensor Lagrange shapes
``N_i`` on equispaced nodes of the union cell. ``T`` is obtained on the field
element (``T^L``) and carried down to the union cell with the four fixed
child tables ``T^h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .bspline import local_basis_2d
from .errors import PreconditionError
from .polytree import ACTIVE, MAX_LEVEL, REFINED, Cell, PolyTreeForest
from .thb import ThbBasis


# ---- Lagrange shapes -------------------------------------------------------

@lru_cache(maxsize=None)
def _lagrange_polys(p: int) -> tuple[Polynomial, ...]:
    nodes = np.linspace(0.0, 1.0, p + 1)
    polys = []
    for a in range(p + 1):
        poly = Polynomial([1.0])
        for c in range(p + 1):
            if c != a:
                poly = poly * Polynomial([-nodes[c], 1.0]) / (nodes[a] - nodes[c])
        polys.append(poly)
    return tuple(polys)


@lru_cache(maxsize=None)
def _lagrange_derivs(p: int, deriv: int) -> tuple[Polynomial, ...]:
    return tuple(q.deriv(deriv) if deriv else q for q in _lagrange_polys(p))


def lagrange_nodes_1d(p: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, p + 1)


def lagrange_nodes_2d(p: int) -> np.ndarray:
    """Reference nodes ``((p+1)**2, 2)``, x index fastest."""
    t = lagrange_nodes_1d(p)
    return np.stack([np.tile(t, p + 1), np.repeat(t, p + 1)], axis=-1)


def lagrange_basis_1d(p: int, u, deriv: int = 0) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.stack([q(u) for q in _lagrange_derivs(p, deriv)], axis=-1)


def lagrange_basis_2d(p: int, uv, deriv: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Tensor Lagrange shapes at reference points, index ``a + (p+1) * b``."""
    uv = np.asarray(uv, dtype=float)
    lx = lagrange_basis_1d(p, uv[..., 0], deriv[0])
    ly = lagrange_basis_1d(p, uv[..., 1], deriv[1])
    return (ly[..., :, None] * lx[..., None, :]).reshape(uv.shape[:-1] + ((p + 1) ** 2,))


@lru_cache(maxsize=None)
def href_extraction_table(child: int, degree: int) -> np.ndarray:
    """Parent Lagrange shapes at the nodes of child ``child = di + 2*dj``."""
    if child not in (0, 1, 2, 3):
        raise PreconditionError("child position must be 0..3")
    off = np.array([child & 1, child >> 1], dtype=float)
    table = lagrange_basis_2d(degree, (lagrange_nodes_2d(degree) + off) / 2.0)
    table.setflags(write=False)
    return table


def lagrange_extraction(basis: ThbBasis, element: int) -> np.ndarray:
    """``T^L[j, k] = B_k(xi_j)`` at the Lagrange nodes of a field element."""
    return _node_values(basis.degree) @ basis.elem_coeffs[element].T


@lru_cache(maxsize=None)
def _node_values(p: int) -> np.ndarray:
    table = local_basis_2d(p, lagrange_nodes_2d(p))
    table.setflags(write=False)
    return table


# ---- union mesh ------------------------------------------------------------

@dataclass
class Facet:
    """Shared edge piece between union cells ``a`` (left/below) and ``b``.

    ``axis`` is the facet normal direction (0: x, 1: y); ``pos`` its
    coordinate; ``span`` the interval along the other axis.
    """

    a: int
    b: int
    axis: int
    pos: float
    span: tuple[float, float]


@dataclass
class UnionMesh:
    """Finest common mesh of several fields, optionally refined further."""

    forest: PolyTreeForest
    ais: tuple[int, ...]
    cells: list[Cell]
    geom_refine: int = 0
    index: dict[Cell, int] = field(default_factory=dict)

    def __post_init__(self):
        self.index = {c: n for n, c in enumerate(self.cells)}

    def __len__(self) -> int:
        return len(self.cells)

    def bounds(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.forest.cell_bounds(self.cells[n])

    def size(self, n: int) -> np.ndarray:
        return self.forest.h(self.cells[n][0])

    def lows_and_sizes(self) -> tuple[np.ndarray, np.ndarray]:
        lv = np.array([c[0] for c in self.cells])
        ij = np.array([(c[1], c[2]) for c in self.cells], dtype=float)
        h = self.forest.h0[None, :] * (2.0 ** -lv)[:, None]
        return self.forest.origin + ij * h, h

    def find(self, cell: Cell) -> int | None:
        """Union cell equal to or containing lattice cell ``cell``."""
        c = cell
        while c is not None:
            n = self.index.get(c)
            if n is not None:
                return n
            c = self.forest.parent(c)
        return None

    def locate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        top = max(c[0] for c in self.cells)
        nx, ny = self.forest.lattice_shape(top)
        ij = np.floor((pts - self.forest.origin) / self.forest.h(top)).astype(int)
        ij = np.clip(ij, 0, [nx - 1, ny - 1])
        return np.array([self.find((top, int(a), int(b))) for a, b in ij], dtype=np.int64)

    def facets(self) -> list[Facet]:
        """Interior facets, one per finer-side edge piece."""
        out = []
        for n, (l, i, j) in enumerate(self.cells):
            lo, hi = self.forest.cell_bounds((l, i, j))
            for side, (di, dj) in ((1, (1, 0)), (2, (0, 1)), (3, (-1, 0)), (0, (0, -1))):
                nb = (l, i + di, j + dj)
                if not self.forest.in_lattice(*nb):
                    continue
                m = self.find(nb)
                axis = 0 if side in (1, 3) else 1
                span = (lo[1 - axis], hi[1 - axis])
                if m is None:
                    continue  # the neighbor side is finer; it owns the facet
                if self.cells[m][0] == l and side in (3, 0):
                    continue  # same level: record once from the left/below cell
                if side in (1, 2):
                    out.append(Facet(n, m, axis, float(hi[axis]), span))
                else:
                    out.append(Facet(m, n, axis, float(lo[axis]), span))
        out.sort(key=lambda f: (f.axis, f.pos, f.span[0]))
        return out

    def boundary_sides(self, n: int) -> list[int]:
        """Sides (0 bottom, 1 right, 2 top, 3 left) of cell ``n`` on the box boundary."""
        l, i, j = self.cells[n]
        nx, ny = self.forest.lattice_shape(l)
        out = []
        if j == 0:
            out.append(0)
        if i == nx - 1:
            out.append(1)
        if j == ny - 1:
            out.append(2)
        if i == 0:
            out.append(3)
        return out


def build_union(forest: PolyTreeForest, ais, geom_refine: int = 0, min_level: int = 0) -> UnionMesh:
    """Cells active for some AI and not refined for any other, then refined.

    ``geom_refine`` subdivides every union cell that many extra times;
    ``min_level`` subdivides cells until they reach at least that level.
    """
    ais = tuple(ais)
    if not ais:
        raise PreconditionError("need at least one activation index")
    if geom_refine < 0 or min_level < 0:
        raise PreconditionError("refinement depths must be non-negative")
    base = []
    for c, bits in forest.cells.items():
        states = [(bits >> (2 * a)) & 3 for a in ais]
        if ACTIVE in states and REFINED not in states:
            base.append(c)
    cells = []
    for c in base:
        extra = max(geom_refine, min_level - c[0])
        l, i, j = c
        if l + extra > MAX_LEVEL + 8:
            raise PreconditionError("union refinement too deep")
        s = 1 << extra
        for jj in range(j * s, (j + 1) * s):
            for ii in range(i * s, (i + 1) * s):
                cells.append((l + extra, ii, jj))
    cells.sort(key=lambda c: (c[0], c[2], c[1]))
    return UnionMesh(forest, ais, cells, geom_refine)


# ---- composed operators ----------------------------------------------------

@dataclass
class FieldExtraction:
    """Extraction data of one field on all union cells.

    ``T[n]`` maps the field's nonzero functions on union cell ``n`` (global
    indices ``funcs[n]``) to Lagrange coefficients of degree ``basis.degree``.
    """

    basis: ThbBasis
    element: np.ndarray
    funcs: list[np.ndarray]
    T: list[np.ndarray]


def descent_chain(element: Cell, cell: Cell) -> list[int]:
    """Child positions leading from ``element`` down to ``cell``."""
    le, ie, je = element
    lc, ic, jc = cell
    depth = lc - le
    if depth < 0 or (ic >> depth) != ie or (jc >> depth) != je:
        raise PreconditionError(f"{cell} is not inside {element}")
    return [((ic >> k) & 1) + 2 * ((jc >> k) & 1) for k in range(depth - 1, -1, -1)]


def compose_extraction(basis: ThbBasis, element: int, cell: Cell) -> np.ndarray:
    """``T = T^h_n ... T^h_1 T^L`` for a union cell inside a field element."""
    chain = descent_chain(basis.elements[element], cell)
    if len(chain) > MAX_LEVEL + 8:
        raise PreconditionError("extraction chain too deep")
    T = lagrange_extraction(basis, element)
    for pos in chain:
        T = href_extraction_table(pos, basis.degree) @ T
    return T


def build_extraction(union: UnionMesh, basis: ThbBasis) -> FieldExtraction:
    """Compose extraction operators of ``basis`` on every union cell."""
    elements = np.empty(len(union), dtype=np.int64)
    funcs, Ts = [], []
    cache: dict[int, np.ndarray] = {}
    for n, cell in enumerate(union.cells):
        e = _field_element(basis, cell)
        elements[n] = e
        if e not in cache:
            cache[e] = lagrange_extraction(basis, e)
        T = cache[e]
        for pos in descent_chain(basis.elements[e], cell):
            T = href_extraction_table(pos, basis.degree) @ T
        funcs.append(basis.elem_funcs[e])
        Ts.append(T)
    return FieldExtraction(basis, elements, funcs, Ts)


def _field_element(basis: ThbBasis, cell: Cell) -> int:
    c = cell
    while c is not None:
        if c in basis.element_index:
            return basis.element_index[c]
        c = basis.forest.parent(c)
    raise PreconditionError(f"union cell {cell} is not covered by a field element")

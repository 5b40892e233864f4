"""Hierarchical and truncated hierarchical B-spline bases on a polytree.

A basis is stored element by element. For each active cell ``K`` at level
``L`` the nonzero functions are listed with a coefficient row over the
``(p+1)**2`` level-``L`` B-splines that live on ``K``. Coarse functions reach
that representation by repeated two-scale subdivision along the ancestor
chain of ``K``; truncation zeroes the coefficients of finer functions whose
support lies inside the next refined domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bspline import local_basis_2d, subdivision_matrix
from .errors import PreconditionError, RegularityError
from .polytree import Cell, PolyTreeForest

FunctionId = tuple[int, int, int]


class _Domains:
    """Summed-area tables of the nested domains of one AI."""

    def __init__(self, forest: PolyTreeForest, ai: int, degree: int):
        self.forest = forest
        self.p = degree
        self.top = forest.max_level(ai)
        self.masks = [forest.omega(ai, k) for k in range(self.top + 1)]
        self.sat = []
        for m in self.masks:
            s = np.zeros((m.shape[0] + 1, m.shape[1] + 1), dtype=np.int64)
            s[1:, 1:] = m.cumsum(0).cumsum(1)
            self.sat.append(s)

    def _count(self, level, i0, i1, j0, j1):
        """Covered cells in ``[i0, i1) x [j0, j1)`` of the level lattice (arrays)."""
        s = self.sat[level]
        return s[j1, i1] - s[j0, i1] - s[j1, i0] + s[j0, i0]

    def contains_box(self, level, i0, i1, j0, j1):
        """True where the clipped lattice box lies inside the level domain."""
        if level > self.top:
            return np.zeros(np.broadcast(i0, j0).shape, dtype=bool)
        nx, ny = self.forest.lattice_shape(level)
        a0, a1 = np.clip(i0, 0, nx), np.clip(i1, 0, nx)
        b0, b1 = np.clip(j0, 0, ny), np.clip(j1, 0, ny)
        area = (a1 - a0) * (b1 - b0)
        return (area > 0) & (self._count(level, a0, a1, b0, b1) == area)

    def supp_in(self, fn_level, i, j, dom_level):
        """Support of level-``fn_level`` function(s) ``(i, j)`` inside domain ``dom_level``."""
        p = self.p
        s = 1 << (dom_level - fn_level)
        i, j = np.asarray(i), np.asarray(j)
        return self.contains_box(dom_level, i * s, (i + p + 1) * s, j * s, (j + p + 1) * s)


@dataclass
class ThbBasis:
    """Hierarchical B-spline basis of one field.

    Attributes:
        forest: the shared polytree.
        ai: activation index of the field.
        degree: polynomial degree ``p`` in both directions.
        truncated: whether coarse functions are truncated.
        functions: active function ids ``(level, i, j)`` in sorted order.
        elements: active cells of the field.
        elem_funcs: per element, global indices of the nonzero functions.
        elem_coeffs: per element, rows of coefficients over the element's own
            level B-splines (local index ``rx + (p+1) * ry``).
    """

    forest: PolyTreeForest
    ai: int
    degree: int
    truncated: bool
    functions: list[FunctionId] = field(default_factory=list)
    elements: list[Cell] = field(default_factory=list)
    elem_funcs: list[np.ndarray] = field(default_factory=list)
    elem_coeffs: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.function_index = {f: n for n, f in enumerate(self.functions)}
        self.element_index = {c: n for n, c in enumerate(self.elements)}
        self.top_level = max((c[0] for c in self.elements), default=0)

    @property
    def n_functions(self) -> int:
        return len(self.functions)

    def element_of(self, cell: Cell) -> int:
        """Index of the active element covering lattice cell ``cell``."""
        anc = self.forest.active_ancestor(self.ai, cell)
        if anc is None:
            raise PreconditionError(f"cell {cell} is finer than the field mesh")
        return self.element_index[anc]

    def locate(self, points) -> np.ndarray:
        """Indices of active elements containing each point (boundary ties go low)."""
        f = self.forest
        x = np.atleast_2d(np.asarray(points, dtype=float))
        top = self.top_level
        nx, ny = f.lattice_shape(top)
        ij = np.floor((x - f.origin) / f.h(top)).astype(int)
        ij = np.clip(ij, 0, [nx - 1, ny - 1])
        return np.array([self.element_of((top, int(a), int(b))) for a, b in ij], dtype=np.int64)

    def eval_active(self, element: int, point, tol: float = 1e-12):
        """Values ``(n,)`` and gradients ``(n, 2)`` of the element's functions."""
        cell = self.elements[element]
        lo, hi = self.forest.cell_bounds(cell)
        x = np.asarray(point, dtype=float)
        h = hi - lo
        if np.any(x < lo - tol * h) or np.any(x > hi + tol * h):
            raise PreconditionError(f"point {x} outside element {cell}")
        uv = (x - lo) / h
        p = self.degree
        C = self.elem_coeffs[element]
        val = C @ local_basis_2d(p, uv)
        gx = C @ local_basis_2d(p, uv, (1, 0)) / h[0]
        gy = C @ local_basis_2d(p, uv, (0, 1)) / h[1]
        return val, np.stack([gx, gy], axis=-1)

    def evaluate(self, points, coeffs=None, deriv: tuple[int, int] = (0, 0)) -> np.ndarray:
        """Sum of all functions, or the spline with ``coeffs``, at ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elems = self.locate(pts)
        out = np.empty(len(pts))
        p = self.degree
        for e in np.unique(elems):
            sel = elems == e
            lo, hi = self.forest.cell_bounds(self.elements[e])
            h = hi - lo
            local = local_basis_2d(p, (pts[sel] - lo) / h, deriv) / (h[0] ** deriv[0] * h[1] ** deriv[1])
            vals = local @ self.elem_coeffs[e].T
            w = np.ones(len(self.elem_funcs[e])) if coeffs is None else np.asarray(coeffs)[self.elem_funcs[e]]
            out[sel] = vals @ w
        return out


def _active_functions(dom: _Domains, forest: PolyTreeForest) -> list[FunctionId]:
    p = dom.p
    out: list[FunctionId] = []
    for k in range(dom.top + 1):
        nx, ny = forest.lattice_shape(k)
        I, J = np.meshgrid(np.arange(-p, nx), np.arange(-p, ny), indexing="xy")
        sel = dom.supp_in(k, I, J, k) & ~dom.supp_in(k, I, J, k + 1)
        for j, i in zip(J[sel], I[sel]):
            out.append((k, int(i), int(j)))
    out.sort()
    return out


def _window(p: int, a: int, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Function indices ``(i, j)`` of the local window of cell ``(a, b)``, local order."""
    r = np.arange(p + 1)
    return np.tile(a - p + r, p + 1), np.repeat(b - p + r, p + 1)


def _build(forest: PolyTreeForest, ai: int, degree: int, truncated: bool) -> ThbBasis:
    if degree < 1:
        raise PreconditionError("degree must be >= 1")
    if not forest.is_buffer_regular(ai, degree):
        raise RegularityError(
            f"mesh of AI {ai} violates the buffer rule for degree {degree}; refine with b_buffer >= {degree}")
    p = degree
    dom = _Domains(forest, ai, p)
    functions = _active_functions(dom, forest)
    index = {f: n for n, f in enumerate(functions)}
    S = [subdivision_matrix(p, c) for c in (0, 1)]
    elements = forest.active_mesh(ai)
    n_loc = (p + 1) ** 2
    full: dict[Cell, bool] = {}
    states: dict[tuple[int, int, int, int], tuple[np.ndarray, list[int]]] = {}

    def window_full(k, ca, cb):
        key = (k, ca, cb)
        if key not in full:
            full[key] = bool(np.all(dom.supp_in(k, *_window(p, ca, cb), k)))
        return full[key]

    def state(k0, k, ca, cb):
        # coefficient rows over the level-k window of (k, ca, cb) when the
        # element's chain starts at level k0; shared by all descendants
        key = (k0, k, ca, cb)
        if key in states:
            return states[key]
        if k > k0:
            pa, pb = ca >> 1, cb >> 1
            C, rows = state(k0, k - 1, pa, pb)
            Sx, Sy = S[ca - 2 * pa], S[cb - 2 * pb]
            C = np.einsum("rq,nqs,ts->nrt", Sy, C.reshape(-1, p + 1, p + 1), Sx).reshape(-1, n_loc)
        else:
            C, rows = np.zeros((0, n_loc)), []
        win_i, win_j = _window(p, ca, cb)
        inside = dom.supp_in(k, win_i, win_j, k)
        if truncated and k > k0:
            C[:, inside] = 0.0
        new = inside & ~dom.supp_in(k, win_i, win_j, k + 1)
        if np.any(new):
            add = np.zeros((int(new.sum()), n_loc))
            add[np.arange(len(add)), np.flatnonzero(new)] = 1.0
            C = np.vstack([C, add])
            rows = rows + [index[(k, int(i), int(j))] for i, j in zip(win_i[new], win_j[new])]
        states[key] = (C, rows)
        return C, rows

    elem_funcs, elem_coeffs = [], []
    for cell in elements:
        L, a, b = cell
        k0 = 0
        if truncated:
            for d in range(L, -1, -1):
                if window_full(L - d, a >> d, b >> d):
                    k0 = L - d
        C, rows = state(k0, L, a, b)
        keep = np.any(C != 0.0, axis=1)
        rows_arr = np.asarray(rows, dtype=np.int64)[keep]
        C = C[keep]
        order = np.argsort(rows_arr, kind="stable")
        elem_funcs.append(rows_arr[order])
        elem_coeffs.append(C[order])
    return ThbBasis(forest, ai, p, truncated, functions, elements, elem_funcs, elem_coeffs)


def build_hierarchical(forest: PolyTreeForest, ai: int, degree: int) -> ThbBasis:
    """Non-truncated hierarchical basis of field ``ai``."""
    return _build(forest, ai, degree, truncated=False)


def build_truncated(basis: ThbBasis) -> ThbBasis:
    """Truncated counterpart of a hierarchical basis (same function ids)."""
    return _build(basis.forest, basis.ai, basis.degree, truncated=True)


def build_thb(forest: PolyTreeForest, ai: int, degree: int) -> ThbBasis:
    """Truncated hierarchical basis of field ``ai``."""
    return _build(forest, ai, degree, truncated=True)

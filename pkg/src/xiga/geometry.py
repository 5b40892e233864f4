"""Level-set geometry and the cut integration mesh.

Each union cell is split into two triangles along its lower-left to
upper-right diagonal. Every level set is replaced by its linear interpolant on
each triangle and the triangle is clipped against the zero line of every
level set in turn. The resulting convex polygons carry a phase. Polygons of
the same phase that share an internal edge are merged into *regions*; a
region is the unit for quadrature, enrichment connectivity and ghost pairing.

Edge tags: cell sides ``0`` bottom, ``1`` right, ``2`` top, ``3`` left; the
diagonal ``DIAG``; cut edges ``CUT``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import GeometryResolutionError, PreconditionError
from .extraction import Facet, UnionMesh
from .quadrature import gauss_square, map_triangles

DIAG, CUT = 4, 5
SNAP = 1e-10
LevelSet = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ---- level sets --------------------------------------------------------------

@dataclass
class LevelSetGeometry:
    """Phases defined by the signs of a list of level sets.

    ``phase_fn`` maps a boolean array ``(..., K)`` of ``phi_k > 0`` to phase
    indices. Points with ``phi_k == 0`` count as negative, which sends ties
    to the lower phase for the built-in constructors.
    """

    level_sets: list[LevelSet]
    phase_fn: Callable[[np.ndarray], np.ndarray]
    n_phases: int
    void: frozenset[int] = frozenset()

    def values(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float) * np.ones(pts.shape[:-1])
                         for f in self.level_sets], axis=-1)

    def phase_of_signs(self, pos) -> np.ndarray:
        return np.asarray(self.phase_fn(np.asarray(pos, dtype=bool)), dtype=np.int64)

    def classify(self, pts) -> np.ndarray:
        return self.phase_of_signs(self.values(pts) > 0.0)

    @classmethod
    def single(cls, phi: LevelSet, void: Sequence[int] = ()) -> "LevelSetGeometry":
        """Phase 0 where ``phi <= 0``, phase 1 where ``phi > 0``."""
        return cls([phi], lambda s: s[..., 0].astype(np.int64), 2, frozenset(void))

    @classmethod
    def from_table(cls, level_sets: list[LevelSet], table: dict[tuple[bool, ...], int],
                   void: Sequence[int] = (), default: int | None = None) -> "LevelSetGeometry":
        """Phases looked up from explicit sign patterns."""
        K = len(level_sets)
        lut = np.full(1 << K, -1 if default is None else default, dtype=np.int64)
        for key, ph in table.items():
            code = sum(int(b) << k for k, b in enumerate(key))
            lut[code] = ph
        weights = 1 << np.arange(K)

        def phase_fn(s):
            out = lut[(s.astype(np.int64) * weights).sum(-1)]
            if np.any(out < 0):
                raise PreconditionError("sign pattern without a phase")
            return out

        n = int(lut.max()) + 1
        return cls(list(level_sets), phase_fn, n, frozenset(void))

    @classmethod
    def argmax(cls, fields: list[LevelSet], void: Sequence[int] = ()) -> "LevelSetGeometry":
        """Phase ``m`` where ``fields[m]`` is largest; ties go to the lower index."""
        N = len(fields)
        pairs = [(a, b) for a in range(N) for b in range(a + 1, N)]
        diffs = [(lambda x, y, a=a, b=b: fields[b](x, y) - fields[a](x, y)) for a, b in pairs]

        def phase_fn(s):
            out = np.full(s.shape[:-1], -1, dtype=np.int64)
            for m in range(N):
                win = np.ones(s.shape[:-1], dtype=bool)
                for k, (a, b) in enumerate(pairs):
                    if a == m:
                        win &= ~s[..., k]
                    elif b == m:
                        win &= s[..., k]
                out = np.where((out < 0) & win, m, out)
            return out

        return cls(diffs, phase_fn, N, frozenset(void))


def classify_point(geometry: LevelSetGeometry, point) -> int:
    return int(geometry.classify(np.asarray(point, dtype=float)[None, :])[0])


def circle(center, radius) -> LevelSet:
    cx, cy = center
    return lambda x, y: np.hypot(x - cx, y - cy) - radius


def ellipse(center, a, b) -> LevelSet:
    cx, cy = center
    return lambda x, y: np.sqrt(((x - cx) / a) ** 2 + ((y - cy) / b) ** 2) - 1.0


def half_plane(point, angle) -> LevelSet:
    """Signed distance to the line through ``point`` at ``angle``; positive to its right."""
    cx, cy = point
    s, c = np.sin(angle), np.cos(angle)
    return lambda x, y: s * (x - cx) - c * (y - cy)


def lshape_geometry(half_width: float = 1.0) -> LevelSetGeometry:
    """Square ``[-a, a]^2`` minus the quadrant ``x > 0, y < 0``; outside is void (phase 1).

    Built from six half-planes so the polygonal boundary is exact under
    linear interpolation.
    """
    a = half_width
    ls = [lambda x, y: x - a, lambda x, y: -a - x, lambda x, y: y - a, lambda x, y: -a - y,
          lambda x, y: x + 0.0 * y, lambda x, y: -y + 0.0 * x]

    def phase_fn(s):
        outside = s[..., 0] | s[..., 1] | s[..., 2] | s[..., 3] | (s[..., 4] & s[..., 5])
        return outside.astype(np.int64)

    return LevelSetGeometry(ls, phase_fn, 2, frozenset({1}))


def load_lattice_csv(path, origin, spacing) -> list[LevelSet]:
    """Level sets sampled on lattice vertices, bilinearly interpolated.

    The file has a header row and columns ``i, j, phi_1 .. phi_N``; vertex
    ``(i, j)`` sits at ``origin + (i, j) * spacing``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    ii, jj = data[:, 0].astype(int), data[:, 1].astype(int)
    nx, ny = ii.max() + 1, jj.max() + 1
    xs = origin[0] + spacing[0] * np.arange(nx)
    ys = origin[1] + spacing[1] * np.arange(ny)
    out = []
    for k in range(data.shape[1] - 2):
        grid = np.full((nx, ny), np.nan)
        grid[ii, jj] = data[:, 2 + k]
        if np.isnan(grid).any():
            raise PreconditionError("lattice CSV does not cover every vertex")
        interp = RegularGridInterpolator((xs, ys), grid, bounds_error=False, fill_value=None)
        out.append(lambda x, y, f=interp: f(np.stack([np.asarray(x), np.asarray(y)], axis=-1)))
    return out


LEVEL_SETS = {"circle": circle, "ellipse": ellipse, "half_plane": half_plane}


# ---- clipping ------------------------------------------------------------------

def _poly_area(V: np.ndarray) -> float:
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross_point(pa, pb, fa, fb):
    if (pb[0], pb[1]) < (pa[0], pa[1]):
        pa, pb, fa, fb = pb, pa, fb, fa
    t = fa / (fa - fb)
    return pa + t * (pb - pa)


def _split(V, tags, f, min_area):
    """Split a convex polygon by the sign of vertex values ``f``."""
    m = len(V)
    sides: tuple[list, list] = ([], [])
    for a in range(m):
        b = (a + 1) % m
        fa, fb = f[a], f[b]
        member = frozenset({(a - 1) % m, a})
        if fa <= 0:
            sides[0].append((V[a], member))
        if fa >= 0:
            sides[1].append((V[a], member))
        if (fa < 0 < fb) or (fb < 0 < fa):
            item = (_cross_point(V[a], V[b], fa, fb), frozenset({a}))
            sides[0].append(item)
            sides[1].append(item)
    out = []
    for pts in sides:
        if len(pts) < 3:
            out.append(None)
            continue
        W = np.array([p for p, _ in pts])
        if _poly_area(W) <= min_area:
            out.append(None)
            continue
        new_tags = []
        for n in range(len(pts)):
            common = pts[n][1] & pts[(n + 1) % len(pts)][1]
            new_tags.append(tags[next(iter(common))] if common else CUT)
        out.append((W, new_tags))
    return out


def _cut_cell(lo, h, corner_vals, geometry: LevelSetGeometry, hanging=None):
    """Phase-tagged polygons of one cell: list of ``(V, tags, phase)``.

    Without hanging nodes the cell is split along its LL-UR diagonal. With
    ``hanging = (B, tags, vals, center_val)``, a counter-clockwise boundary
    polygon that includes the vertices of finer neighbors, the cell is fanned
    from its center so that edge pieces match the neighbors' edges.
    """
    LL, LR, UR, UL = lo, lo + (h[0], 0.0), lo + h, lo + (0.0, h[1])
    hmin = min(h)
    min_area = 1e-14 * h[0] * h[1]
    if hanging is None:
        P = np.array([LL, LR, UR, UL], dtype=float)
        tris = [(P[[0, 1, 2]], corner_vals[[0, 1, 2]], [0, 1, DIAG]),
                (P[[0, 2, 3]], corner_vals[[0, 2, 3]], [DIAG, 2, 3])]
    else:
        B, btags, bvals, cval = hanging
        C = lo + 0.5 * h
        m = len(B)
        tris = [(np.array([C, B[k], B[(k + 1) % m]]), np.stack([cval, bvals[k], bvals[(k + 1) % m]]),
                 [DIAG, btags[k], DIAG]) for k in range(m)]
    out = []
    for P, F, tags in tris:
        M = np.array([P[1] - P[0], P[2] - P[0]])
        G = np.linalg.solve(M, F[1:] - F[0])  # (2, K)
        gnorm = np.hypot(G[0], G[1])
        polys = [(P, list(tags))]
        for k in range(F.shape[1]):
            nxt = []
            for V, tg in polys:
                f = F[0, k] + (V - P[0]) @ G[:, k]
                f = np.where(np.abs(f) <= SNAP * hmin * gnorm[k], 0.0, f)
                for piece in _split(V, tg, f, min_area):
                    if piece is not None:
                        nxt.append(piece)
            polys = nxt
        for V, tg in polys:
            c = V.mean(axis=0)
            signs = (F[0] + (c - P[0]) @ G) > 0.0
            out.append((V, tg, int(geometry.phase_of_signs(signs[None, :])[0])))
    return out


def _side_leaves(union: UnionMesh, cell, side: int) -> list:
    """Union cells finer than ``cell`` along one of its sides (empty if none)."""
    l, i, j = cell
    di, dj = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}[side]
    nb = (l, i + di, j + dj)
    if not union.forest.in_lattice(*nb) or union.find(nb) is not None:
        return []
    out, stack = [], [nb]
    while stack:
        c = stack.pop()
        if c in union.index:
            out.append(c)
            continue
        # the two children touching ``cell``
        kids = union.forest.children(c)
        pick = {0: (2, 3), 1: (0, 2), 2: (0, 1), 3: (1, 3)}[side]
        stack.extend(kids[k] for k in pick)
    return out


def _hanging_polygon(union: UnionMesh, n: int, lo, h):
    """Counter-clockwise boundary vertices and side tags including hanging nodes."""
    cell = union.cells[n]
    hi = lo + h
    extra = {}
    for side in range(4):
        ax = 0 if side in (0, 2) else 1
        pts = set()
        for c in _side_leaves(union, cell, side):
            a, b = union.forest.cell_bounds(c)
            pts.update((float(a[ax]), float(b[ax])))
        extra[side] = sorted(t for t in pts if lo[ax] + 1e-12 * h[ax] < t < hi[ax] - 1e-12 * h[ax])
    if not any(extra.values()):
        return None
    V, tags = [], []
    V.append((lo[0], lo[1])), tags.append(0)
    for x in extra[0]:
        V.append((x, lo[1])), tags.append(0)
    V.append((hi[0], lo[1])), tags.append(1)
    for y in extra[1]:
        V.append((hi[0], y)), tags.append(1)
    V.append((hi[0], hi[1])), tags.append(2)
    for x in reversed(extra[2]):
        V.append((x, hi[1])), tags.append(2)
    V.append((lo[0], hi[1])), tags.append(3)
    for y in reversed(extra[3]):
        V.append((lo[0], y)), tags.append(3)
    return np.array(V, dtype=float), tags


def _overlap(u1, w1, u2, w2, tol):
    """Overlapping piece of two segments if collinear, else ``None``."""
    d = w1 - u1
    L = float(np.hypot(*d))
    if L <= tol:
        return None
    e = d / L
    nrm = np.array([-e[1], e[0]])
    if abs(float((u2 - u1) @ nrm)) > tol or abs(float((w2 - u1) @ nrm)) > tol:
        return None
    s0, s1 = sorted((float((u2 - u1) @ e), float((w2 - u1) @ e)))
    a, b = max(0.0, s0), min(L, s1)
    if b - a <= tol:
        return None
    return u1 + a * e, u1 + b * e


# ---- integration mesh -------------------------------------------------------

@dataclass
class Region:
    """Connected same-phase part of one union cell."""

    cell: int
    phase: int
    area: float
    tris: np.ndarray | None  # (nt, 3, 2); ``None`` for a full uncut cell
    traces: dict[int, list[tuple[float, float]]]


@dataclass
class InterfaceSegments:
    """Interface pieces; ``normal`` points from phase ``m`` into phase ``n`` (``m < n``)."""

    p0: np.ndarray
    p1: np.ndarray
    normal: np.ndarray
    phase_m: np.ndarray
    phase_n: np.ndarray
    region_m: np.ndarray
    region_n: np.ndarray

    def __len__(self) -> int:
        return len(self.p0)

    @property
    def length(self) -> np.ndarray:
        return np.hypot(*(self.p1 - self.p0).T)


@dataclass
class BoundarySegments:
    """Pieces of the background box boundary with their region and box side."""

    p0: np.ndarray
    p1: np.ndarray
    normal: np.ndarray
    side: np.ndarray
    region: np.ndarray

    def __len__(self) -> int:
        return len(self.p0)


@dataclass
class GhostPair:
    """Two same-phase regions meeting across a facet."""

    facet: Facet
    region_a: int
    region_b: int


@dataclass
class IntegrationMesh:
    union: UnionMesh
    geometry: LevelSetGeometry
    regions: list[Region]
    cell_regions: list[list[int]]
    cell_cut: np.ndarray
    interfaces: InterfaceSegments
    boundary: BoundarySegments
    adjacency: list[tuple[int, int]]
    facets: list[Facet] = field(default_factory=list)

    @property
    def region_phase(self) -> np.ndarray:
        return np.array([r.phase for r in self.regions], dtype=np.int64)

    @property
    def region_cell(self) -> np.ndarray:
        return np.array([r.cell for r in self.regions], dtype=np.int64)

    def region_triangles(self, r: int) -> np.ndarray:
        reg = self.regions[r]
        if reg.tris is not None:
            return reg.tris
        lo, hi = self.union.bounds(reg.cell)
        LL, LR, UR, UL = lo, np.array([hi[0], lo[1]]), hi, np.array([lo[0], hi[1]])
        return np.array([[LL, LR, UR], [LL, UR, UL]])

    def region_quadrature(self, r: int, order: int, tri_degree: int):
        """Points and weights on region ``r``: tensor Gauss if full, else triangles."""
        reg = self.regions[r]
        if reg.tris is None:
            lo, hi = self.union.bounds(reg.cell)
            ref, w = gauss_square(order)
            return lo + ref * (hi - lo), w * np.prod(hi - lo)
        return map_triangles(reg.tris, tri_degree)

    def locate(self, points) -> np.ndarray:
        """Region containing each point (``-1`` if none is found)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.union.locate(pts)
        out = np.full(len(pts), -1, dtype=np.int64)
        for n, (x, c) in enumerate(zip(pts, cells)):
            regs = self.cell_regions[c]
            if len(regs) == 1:
                out[n] = regs[0]
                continue
            best, dist = -1, np.inf
            for r in regs:
                for t in self.region_triangles(r):
                    d = _tri_distance(t, x)
                    if d < dist:
                        best, dist = r, d
            out[n] = best
        return out

    def phase_measures(self, cell: int) -> tuple[dict[int, float], dict[tuple[int, int], float]]:
        """Phase areas and interface lengths inside one union cell."""
        areas: dict[int, float] = {}
        for r in self.cell_regions[cell]:
            reg = self.regions[r]
            areas[reg.phase] = areas.get(reg.phase, 0.0) + reg.area
        lengths: dict[tuple[int, int], float] = {}
        rc = self.region_cell
        I = self.interfaces
        sel = np.flatnonzero(rc[I.region_m] == cell) if len(I) else []
        for s in sel:
            key = (int(I.phase_m[s]), int(I.phase_n[s]))
            lengths[key] = lengths.get(key, 0.0) + float(I.length[s])
        return areas, lengths

    def ghost_facets(self, phase: int) -> list[GhostPair]:
        """Facet pieces of cells holding ``phase`` next to a cut cell, with region pairs."""
        out = []
        for f in self.facets:
            if not (self.cell_cut[f.a] or self.cell_cut[f.b]):
                continue
            side_a, side_b = (1, 3) if f.axis == 0 else (2, 0)
            for ra in self.cell_regions[f.a]:
                if self.regions[ra].phase != phase:
                    continue
                for rb in self.cell_regions[f.b]:
                    if self.regions[rb].phase != phase:
                        continue
                    if _trace_overlap(self, ra, side_a, rb, side_b, f.span) > 0.0:
                        out.append(GhostPair(f, ra, rb))
        return out


def _tri_distance(t, x) -> float:
    """Zero inside triangle ``t``, else a positive violation measure."""
    a, b, c = t
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    l1 = ((b[0] - x[0]) * (c[1] - x[1]) - (b[1] - x[1]) * (c[0] - x[0])) / det
    l2 = ((c[0] - x[0]) * (a[1] - x[1]) - (c[1] - x[1]) * (a[0] - x[0])) / det
    l3 = 1.0 - l1 - l2
    return float(max(0.0, -l1, -l2, -l3))


def _full_traces(lo, hi) -> dict[int, list[tuple[float, float]]]:
    return {0: [(lo[0], hi[0])], 1: [(lo[1], hi[1])], 2: [(lo[0], hi[0])], 3: [(lo[1], hi[1])]}


def _trace_overlap(mesh: IntegrationMesh, ra, side_a, rb, side_b, span) -> float:
    ta = mesh.regions[ra].traces.get(side_a, [])
    tb = mesh.regions[rb].traces.get(side_b, [])
    tol = 1e-9 * (span[1] - span[0])
    total = 0.0
    for a0, a1 in ta:
        for b0, b1 in tb:
            lo = max(a0, b0, span[0])
            hi = min(a1, b1, span[1])
            if hi - lo > tol:
                total += hi - lo
    return total


def _merge_intervals(iv):
    iv = sorted(iv)
    out = []
    for a, b in iv:
        if out and a <= out[-1][1] + 1e-12 * max(1.0, abs(b)):
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _check_resolution(union: UnionMesh, geometry: LevelSetGeometry, lows, sizes, samples: int = 8):
    t = np.linspace(0.0, 1.0, samples + 1)
    edges = [  # (start offset, direction) in units of the cell size
        ((0, 0), (1, 0)), ((1, 0), (0, 1)), ((0, 1), (1, 0)), ((0, 0), (0, 1)),
    ]
    for (ox, oy), (dx, dy) in edges:
        px = lows[:, None, 0] + sizes[:, None, 0] * (ox + dx * t[None, :])
        py = lows[:, None, 1] + sizes[:, None, 1] * (oy + dy * t[None, :])
        vals = geometry.values(np.stack([px, py], axis=-1)) > 0.0  # (n, s, K)
        changes = np.sum(vals[:, 1:] != vals[:, :-1], axis=1)
        bad = np.flatnonzero(np.any(changes > 1, axis=1))
        if len(bad):
            raise GeometryResolutionError(
                f"a level set changes sign more than once on an edge of union cell "
                f"{union.cells[bad[0]]}; increase geom_refine")
    center = geometry.values(lows + 0.5 * sizes) > 0.0
    corners = geometry.values(np.stack([lows, lows + sizes * (1, 0), lows + sizes, lows + sizes * (0, 1)], 1)) > 0.0
    same = np.all(corners == corners[:, :1], axis=1)
    bad = np.flatnonzero(np.any(same & (center != corners[:, 0]), axis=1))
    if len(bad):
        raise GeometryResolutionError(
            f"a level-set feature lies inside union cell {union.cells[bad[0]]}; increase geom_refine")


def build_integration_mesh(union: UnionMesh, geometry: LevelSetGeometry) -> IntegrationMesh:
    """Cut every union cell and collect regions, interfaces, traces and facets."""
    lows, sizes = union.lows_and_sizes()
    n_cells = len(union)
    _check_resolution(union, geometry, lows, sizes)
    corners = np.stack([lows, lows + sizes * (1, 0), lows + sizes, lows + sizes * (0, 1)], 1)
    cvals = geometry.values(corners)  # (n, 4, K)
    pos = cvals > 0.0
    uniform = np.all(pos == pos[:, :1], axis=1).all(axis=1) & np.all(cvals != 0.0, axis=(1, 2))
    cell_phase = geometry.phase_of_signs(pos[:, 0])

    regions: list[Region] = []
    cell_regions: list[list[int]] = [[] for _ in range(n_cells)]
    adjacency: list[tuple[int, int]] = []
    if_p0, if_p1, if_n, if_pm, if_pn, if_rm, if_rn = [], [], [], [], [], [], []

    for c in range(n_cells):
        lo, h = lows[c], sizes[c]
        hi = lo + h
        hanging = _hanging_polygon(union, c, lo, h)
        if hanging is not None:
            B, btags = hanging
            bvals = geometry.values(B)
            cval = geometry.values((lo + 0.5 * h)[None])[0]
            bpos = bvals > 0.0
            if uniform[c] and not (np.all(bpos == pos[c, :1]) and np.all(bvals != 0.0)):
                uniform[c] = False
            hanging = (B, btags, bvals, cval)
        if uniform[c]:
            cell_regions[c].append(len(regions))
            regions.append(Region(c, int(cell_phase[c]), float(h[0] * h[1]), None, _full_traces(lo, hi)))
            continue
        polys = _cut_cell(lo, h, cvals[c], geometry, hanging)
        tol = 1e-9 * min(h)
        parent = list(range(len(polys)))

        def root(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        pending_if = []
        for a in range(len(polys)):
            Va, ta, pa = polys[a]
            for b in range(a + 1, len(polys)):
                Vb, tb, pb = polys[b]
                for ea in range(len(Va)):
                    if ta[ea] not in (DIAG, CUT):
                        continue
                    u1, w1 = Va[ea], Va[(ea + 1) % len(Va)]
                    for eb in range(len(Vb)):
                        if tb[eb] not in (DIAG, CUT):
                            continue
                        seg = _overlap(u1, w1, Vb[eb], Vb[(eb + 1) % len(Vb)], tol)
                        if seg is None:
                            continue
                        if pa == pb:
                            parent[root(a)] = root(b)
                        else:
                            d = w1 - u1
                            nrm = np.array([d[1], -d[0]]) / np.hypot(*d)  # outward of polygon a
                            pending_if.append((seg, nrm, a, b))
        groups: dict[int, list[int]] = {}
        for a in range(len(polys)):
            groups.setdefault(root(a), []).append(a)
        poly_region = {}
        full_area = float(h[0] * h[1])
        single = len(groups) == 1
        for members in groups.values():
            rid = len(regions)
            area = sum(_poly_area(polys[a][0]) for a in members)
            traces: dict[int, list] = {}
            tris = []
            for a in members:
                V, tg, _ = polys[a]
                poly_region[a] = rid
                for k in range(1, len(V) - 1):
                    tris.append([V[0], V[k], V[k + 1]])
                for e, t in enumerate(tg):
                    if t in (0, 1, 2, 3):
                        u, w = V[e], V[(e + 1) % len(V)]
                        ax = 0 if t in (0, 2) else 1
                        traces.setdefault(t, []).append(tuple(sorted((float(u[ax]), float(w[ax])))))
            traces = {s: _merge_intervals(iv) for s, iv in traces.items()}
            if single and abs(area - full_area) <= 1e-12 * full_area:
                regions.append(Region(c, polys[members[0]][2], full_area, None, _full_traces(lo, hi)))
            else:
                regions.append(Region(c, polys[members[0]][2], area, np.array(tris), traces))
            cell_regions[c].append(rid)
        for (q0, q1), nrm, a, b in pending_if:
            ra, rb = poly_region[a], poly_region[b]
            pa, pb = regions[ra].phase, regions[rb].phase
            if pa > pb:
                ra, rb, pa, pb, nrm = rb, ra, pb, pa, -nrm
            if_p0.append(q0), if_p1.append(q1), if_n.append(nrm)
            if_pm.append(pa), if_pn.append(pb), if_rm.append(ra), if_rn.append(rb)

    cell_cut = np.array([len({regions[r].phase for r in rs}) > 1 for rs in cell_regions])

    facets = union.facets()
    mesh = IntegrationMesh(union, geometry, regions, cell_regions, cell_cut,
                           InterfaceSegments(*(np.zeros((0, 2)),) * 3, *(np.zeros(0, dtype=np.int64),) * 4),
                           BoundarySegments(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)),
                                            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)),
                           adjacency, facets)

    # cross-cell adjacency and facet-aligned interfaces
    for f in facets:
        side_a, side_b = (1, 3) if f.axis == 0 else (2, 0)
        same_level = union.cells[f.a][0] == union.cells[f.b][0]
        for ra in cell_regions[f.a]:
            for rb in cell_regions[f.b]:
                ov = _trace_overlap(mesh, ra, side_a, rb, side_b, f.span)
                if ov <= 0.0:
                    continue
                pa, pb = regions[ra].phase, regions[rb].phase
                if pa == pb:
                    adjacency.append((ra, rb))
                elif same_level:
                    for q0, q1 in _trace_pieces(mesh, ra, side_a, rb, side_b, f):
                        nrm = np.zeros(2)
                        nrm[f.axis] = 1.0  # from a into b
                        r_m, r_n, p_m, p_n = (ra, rb, pa, pb) if pa < pb else (rb, ra, pb, pa)
                        if_p0.append(q0), if_p1.append(q1)
                        if_n.append(nrm if pa < pb else -nrm)
                        if_pm.append(p_m), if_pn.append(p_n), if_rm.append(r_m), if_rn.append(r_n)

    if if_p0:
        mesh.interfaces = InterfaceSegments(np.array(if_p0), np.array(if_p1), np.array(if_n),
                                            np.array(if_pm), np.array(if_pn), np.array(if_rm), np.array(if_rn))

    # background box boundary
    b_p0, b_p1, b_n, b_s, b_r = [], [], [], [], []
    outward = {0: (0.0, -1.0), 1: (1.0, 0.0), 2: (0.0, 1.0), 3: (-1.0, 0.0)}
    for c in range(n_cells):
        sides = union.boundary_sides(c)
        if not sides:
            continue
        lo, hi = lows[c], lows[c] + sizes[c]
        for s in sides:
            for r in cell_regions[c]:
                for a, b in regions[r].traces.get(s, []):
                    if s in (0, 2):
                        y = lo[1] if s == 0 else hi[1]
                        q0, q1 = (a, y), (b, y)
                    else:
                        x = hi[0] if s == 1 else lo[0]
                        q0, q1 = (x, a), (x, b)
                    b_p0.append(q0), b_p1.append(q1), b_n.append(outward[s]), b_s.append(s), b_r.append(r)
    if b_p0:
        mesh.boundary = BoundarySegments(np.array(b_p0, dtype=float), np.array(b_p1, dtype=float),
                                         np.array(b_n, dtype=float), np.array(b_s), np.array(b_r))
    return mesh


def _trace_pieces(mesh, ra, side_a, rb, side_b, f: Facet):
    out = []
    for a0, a1 in mesh.regions[ra].traces.get(side_a, []):
        for b0, b1 in mesh.regions[rb].traces.get(side_b, []):
            lo, hi = max(a0, b0, f.span[0]), min(a1, b1, f.span[1])
            if hi - lo > 1e-9 * (f.span[1] - f.span[0]):
                if f.axis == 0:
                    out.append((np.array([f.pos, lo]), np.array([f.pos, hi])))
                else:
                    out.append((np.array([lo, f.pos]), np.array([hi, f.pos])))
    return out

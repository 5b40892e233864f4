"""Quadtree background mesh with per-field activation states.

Every cell is addressed by ``(level, i, j)`` on the level's integer lattice;
cell ``(l, i, j)`` covers ``[i, i+1] x [j, j+1]`` in units of the level-``l``
cell size. A cell stores one 2-bit state per activation index (AI) packed in a
single integer. Cells are created lazily when a parent is first refined for
any AI.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import PreconditionError

INACTIVE, ACTIVE, REFINED = 0, 1, 2
MAX_LEVEL = 16

Cell = tuple[int, int, int]


@dataclass
class PolyTreeForest:
    """Shared quadtree for all fields.

    Attributes:
        bounds: ``((x0, y0), (x1, y1))`` of the background box.
        counts: level-0 cell counts ``(nx, ny)``.
        n_ai: number of registered activation indices.
        cells: map from cell key to packed activation states.
    """

    bounds: tuple[tuple[float, float], tuple[float, float]]
    counts: tuple[int, int]
    n_ai: int = 1
    cells: dict[Cell, int] = field(default_factory=dict)

    # ---- geometry helpers -------------------------------------------------

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.bounds[0], dtype=float)

    @property
    def h0(self) -> np.ndarray:
        (x0, y0), (x1, y1) = self.bounds
        return np.array([(x1 - x0) / self.counts[0], (y1 - y0) / self.counts[1]])

    def h(self, level: int) -> np.ndarray:
        return self.h0 * 2.0 ** -level

    def lattice_shape(self, level: int) -> tuple[int, int]:
        return self.counts[0] << level, self.counts[1] << level

    def in_lattice(self, level: int, i: int, j: int) -> bool:
        nx, ny = self.lattice_shape(level)
        return 0 <= i < nx and 0 <= j < ny

    def cell_bounds(self, cell: Cell) -> tuple[np.ndarray, np.ndarray]:
        l, i, j = cell
        h = self.h(l)
        lo = self.origin + h * (i, j)
        return lo, lo + h

    def cell_center(self, cell: Cell) -> np.ndarray:
        l, i, j = cell
        return self.origin + self.h(l) * (i + 0.5, j + 0.5)

    # ---- state access -----------------------------------------------------

    def _check_ai(self, ai: int) -> None:
        if not 0 <= ai < self.n_ai:
            raise KeyError(f"unknown activation index {ai}")

    def state(self, cell: Cell, ai: int) -> int:
        self._check_ai(ai)
        return (self.cells.get(cell, 0) >> (2 * ai)) & 3

    def _set_state(self, cell: Cell, ai: int, value: int) -> None:
        bits = self.cells.get(cell, 0)
        bits &= ~(3 << (2 * ai))
        self.cells[cell] = bits | (value << (2 * ai))

    def register_ai(self) -> int:
        """Add a field; level-0 cells start active for it."""
        ai = self.n_ai
        self.n_ai += 1
        nx, ny = self.counts
        for j in range(ny):
            for i in range(nx):
                self._set_state((0, i, j), ai, ACTIVE)
        return ai

    @staticmethod
    def parent(cell: Cell) -> Cell | None:
        l, i, j = cell
        return None if l == 0 else (l - 1, i >> 1, j >> 1)

    @staticmethod
    def children(cell: Cell) -> list[Cell]:
        l, i, j = cell
        return [(l + 1, 2 * i + di, 2 * j + dj) for dj in (0, 1) for di in (0, 1)]

    def active_mesh(self, ai: int) -> list[Cell]:
        """Cells active for ``ai``, sorted by ``(level, j, i)``."""
        self._check_ai(ai)
        shift = 2 * ai
        out = [c for c, s in self.cells.items() if (s >> shift) & 3 == ACTIVE]
        return sorted(out, key=lambda c: (c[0], c[2], c[1]))

    def max_level(self, ai: int | None = None) -> int:
        ais = range(self.n_ai) if ai is None else [ai]
        return max(c[0] for c in self.cells for a in ais if self.state(c, a) == ACTIVE)

    def active_ancestor(self, ai: int, cell: Cell) -> Cell | None:
        """The active cell for ``ai`` covering lattice cell ``cell``.

        Returns ``None`` if the lattice cell lies inside a region refined
        deeper than ``cell``'s level.
        """
        c = cell
        while c is not None:
            s = self.state(c, ai)
            if s == ACTIVE:
                return c
            if s == REFINED:
                return None
            c = self.parent(c)
        return None

    # ---- refinement -------------------------------------------------------

    def buffer_closure(self, ai: int, cell: Cell, b_buffer: int,
                       flagged: set[Cell] | None = None) -> set[Cell]:
        """Cells that must also be refined when ``cell`` is refined.

        For every neighbor ``N`` of the parent within the buffer range that is
        active and not yet flagged, the would-be children of ``N`` are tested:
        if any child center lies within ``b_buffer`` cell sizes of ``cell``'s
        center in every direction, ``N`` is flagged and treated the same way.
        A lattice neighbor that does not exist yet is covered by a coarser
        active cell; that ancestor is flagged instead.
        """
        flagged = set() if flagged is None else flagged
        added: set[Cell] = set()
        stack = [cell]
        while stack:
            k = stack.pop()
            for n in self._closure_candidates(ai, k, b_buffer):
                if n in flagged or n in added:
                    continue
                added.add(n)
                stack.append(n)
        return added

    def _closure_candidates(self, ai: int, cell: Cell, b: int) -> list[Cell]:
        l, i, j = cell
        if l == 0:
            return []
        # level-l cells within b cells of ``cell`` (center distance <= b)
        out = []
        parents = set()
        for jj in range(j - b, j + b + 1):
            for ii in range(i - b, i + b + 1):
                if self.in_lattice(l, ii, jj):
                    parents.add((l - 1, ii >> 1, jj >> 1))
        for n in sorted(parents):
            s = self.state(n, ai)
            if s == REFINED:
                continue
            if s == ACTIVE:
                out.append(n)
                continue
            anc = self.active_ancestor(ai, n)
            if anc is not None:
                out.append(anc)
        return out

    def refine_for_ai(self, ai: int, flags: Iterable[Cell], b_buffer: int,
                      halo: bool = False) -> set[Cell]:
        """Refine flagged active cells of ``ai`` and enforce the buffer zone.

        Args:
            ai: activation index.
            flags: cells active for ``ai``.
            b_buffer: buffer parameter, at least the largest field degree.
            halo: also flag the active same-level neighbors of every flag.

        Returns:
            The set of cells that were refined.
        """
        self._check_ai(ai)
        if b_buffer < 1:
            raise PreconditionError("b_buffer must be >= 1")
        flags = set(flags)
        for c in flags:
            if self.state(c, ai) != ACTIVE:
                raise PreconditionError(f"cell {c} is not active for AI {ai}")
        if halo:
            extra = set()
            for l, i, j in flags:
                for dj in (-1, 0, 1):
                    for di in (-1, 0, 1):
                        n = (l, i + di, j + dj)
                        if self.in_lattice(*n) and self.state(n, ai) == ACTIVE:
                            extra.add(n)
            flags |= extra
        done: set[Cell] = set()
        while flags:
            if any(c[0] + 1 > MAX_LEVEL for c in flags):
                raise PreconditionError(f"refinement beyond {MAX_LEVEL} levels")
            closed = set(flags)
            for c in sorted(flags):
                closed |= self.buffer_closure(ai, c, b_buffer, closed)
            for c in sorted(closed):
                self._refine_cell(ai, c)
            done |= closed
            # a coarse ancestor flagged in place of a missing neighbor leaves
            # its newly created children to be checked in another pass
            flags = self.buffer_violations(ai, b_buffer)
        return done

    def _refine_cell(self, ai: int, cell: Cell) -> None:
        self._set_state(cell, ai, REFINED)
        for ch in self.children(cell):
            if ch not in self.cells:
                self.cells[ch] = 0
            self._set_state(ch, ai, ACTIVE)

    def buffer_violations(self, ai: int, b_buffer: int) -> set[Cell]:
        """Active cells that the buffer rule requires to be refined."""
        out: set[Cell] = set()
        shift = 2 * ai
        for c, s in self.cells.items():
            if (s >> shift) & 3 == REFINED:
                out.update(self._closure_candidates(ai, c, b_buffer))
        return out

    def is_buffer_regular(self, ai: int, b_buffer: int) -> bool:
        return not self.buffer_violations(ai, b_buffer)

    # ---- identifiers and dumps -------------------------------------------

    def cell_id(self, cell: Cell) -> int:
        """Unique integer ID from the level-0 ancestor and the child path."""
        l, i, j = cell
        if not self.in_lattice(l, i, j):
            raise PreconditionError(f"cell {cell} outside the lattice")
        if l > MAX_LEVEL:
            raise PreconditionError(f"level {l} exceeds {MAX_LEVEL}")
        nx, ny = self.counts
        base = (j >> l) * nx + (i >> l)
        code = 1
        for k in range(l - 1, -1, -1):
            code = (code << 2) | (((i >> k) & 1) + 2 * ((j >> k) & 1))
        return base + nx * ny * (code - 1)

    def dump(self) -> str:
        """Line-oriented text dump: ``level i j id s_0 .. s_{n_ai-1}``."""
        lines = []
        for c in sorted(self.cells):
            states = " ".join(str(self.state(c, a)) for a in range(self.n_ai))
            lines.append(f"{c[0]} {c[1]} {c[2]} {self.cell_id(c)} {states}")
        return "\n".join(lines) + "\n"

    # ---- lattice views ---------------------------------------------------

    def omega(self, ai: int, level: int) -> np.ndarray:
        """Boolean ``[ny, nx]`` mask of level cells active or refined for ``ai``."""
        nx, ny = self.lattice_shape(level)
        mask = np.zeros((ny, nx), dtype=bool)
        shift = 2 * ai
        for (l, i, j), s in self.cells.items():
            if l == level and (s >> shift) & 3 in (ACTIVE, REFINED):
                mask[j, i] = True
        return mask


def init_base(nx: int, ny: int, bounds, n_ai: int = 1) -> PolyTreeForest:
    """Create a forest with ``nx * ny`` level-0 cells active for every AI."""
    if nx < 1 or ny < 1:
        raise PreconditionError("cell counts must be >= 1")
    (x0, y0), (x1, y1) = bounds
    if not (x1 > x0 and y1 > y0):
        raise PreconditionError("bounds must have positive extent")
    if n_ai < 1:
        raise PreconditionError("need at least one activation index")
    forest = PolyTreeForest(((float(x0), float(y0)), (float(x1), float(y1))), (nx, ny), n_ai=0)
    for _ in range(n_ai):
        forest.register_ai()
    return forest

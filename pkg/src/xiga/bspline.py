"""Uniform B-spline kernel.

Knot vectors are implicit: at refinement level ``l`` the knots of direction
``m`` sit at ``origin[m] + k * spacing[m] * 2**-l`` for every integer ``k``.
Function ``i`` of that level is the cardinal B-spline shifted to start at knot
``i`` and therefore lives on ``[i, i + p + 1]`` in level-``l`` element units.
The grid is never clamped; a domain of ``n`` elements carries ``n + p``
functions per direction, indexed ``-p .. n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "UniformSplineGrid",
    "TensorIndex",
    "cardinal_bspline",
    "local_basis_1d",
    "local_basis_2d",
    "eval_univariate",
    "eval_tensor",
    "subdivision_coefficients",
    "subdivision_matrix",
]


@dataclass(frozen=True)
class UniformSplineGrid:
    """Uniform tensor grid of B-splines at one refinement level."""

    degree: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    counts: tuple[int, ...]
    level: int = 0

    def __post_init__(self):
        if not len(self.degree) == len(self.origin) == len(self.spacing) == len(self.counts):
            raise ValueError("degree, origin, spacing and counts must have equal length")
        if any(p < 1 for p in self.degree):
            raise ValueError("degree must be >= 1 in every direction")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("spacing must be positive")
        if any(n < 1 for n in self.counts):
            raise ValueError("counts must be >= 1")
        if self.level < 0:
            raise ValueError("level must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.degree)

    @property
    def h(self) -> tuple[float, ...]:
        """Element edge lengths at this grid's level."""
        return tuple(s * 2.0 ** -self.level for s in self.spacing)

    @property
    def n_elements(self) -> tuple[int, ...]:
        return tuple(n * 2**self.level for n in self.counts)

    @property
    def n_functions(self) -> tuple[int, ...]:
        return tuple(n + p for n, p in zip(self.n_elements, self.degree))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + n * s for o, n, s in zip(self.origin, self.counts, self.spacing))

    def function_range(self, m: int) -> range:
        return range(-self.degree[m], self.n_elements[m])


@dataclass(frozen=True)
class TensorIndex:
    level: int
    ij: tuple[int, ...]


def cardinal_bspline(p: int, t, deriv: int = 0) -> np.ndarray:
    """Cardinal B-spline of degree ``p`` on ``[0, p+1]`` and its derivatives.

    Evaluated with the uniform-knot form of the Cox-de Boor recursion. Derivatives
    use ``N_p' (t) = N_{p-1}(t) - N_{p-1}(t-1)`` applied ``deriv`` times.
    """
    t = np.asarray(t, dtype=float)
    if deriv < 0:
        raise ValueError("deriv must be non-negative")
    if deriv > p + 1:
        return np.zeros_like(t)
    if deriv > 0:
        # finite-difference stencil of the lower degree spline
        out = np.zeros_like(t)
        for k in range(deriv + 1):
            out += (-1) ** k * comb(deriv, k) * cardinal_bspline(p - deriv, t - k)
        return out
    if p == 0:
        return ((t >= 0.0) & (t < 1.0)).astype(float)
    return (t * cardinal_bspline(p - 1, t) + (p + 1 - t) * cardinal_bspline(p - 1, t - 1.0)) / p


def local_basis_1d(p: int, u, deriv: int = 0) -> np.ndarray:
    """Values of the ``p+1`` B-splines nonzero on one span.

    ``u`` is the local coordinate in ``[0, 1]``; the span's own polynomial
    pieces are used, so ``u = 1`` gives left limits. Column ``r`` is the
    function whose support starts ``p - r`` spans to the left. Shape ``(..., p+1)``.
    """
    u = np.asarray(u, dtype=float)
    pieces = _span_pieces(p, deriv)
    out = np.empty(u.shape + (p + 1,))
    for r in range(p + 1):
        out[..., r] = pieces[p - r](u)
    return out


_PIECES: dict[tuple[int, int], list[Polynomial]] = {}


def _span_pieces(p: int, deriv: int = 0) -> list[Polynomial]:
    """Polynomial piece ``k`` of the cardinal spline on ``[k, k+1]`` in ``s = t - k``."""
    key = (p, deriv)
    if key not in _PIECES:
        if deriv:
            _PIECES[key] = [q.deriv(deriv) for q in _span_pieces(p, 0)]
        elif p == 0:
            _PIECES[key] = [Polynomial([1.0])]
        else:
            low = _span_pieces(p - 1) + [Polynomial([0.0])]
            s = Polynomial([0.0, 1.0])
            pieces = []
            for k in range(p + 1):
                prev = low[k - 1] if k > 0 else Polynomial([0.0])
                pieces.append(((s + k) * low[k] + (p + 1 - k - s) * prev) / p)
            _PIECES[key] = pieces
    return _PIECES[key]


def local_basis_2d(p: int, uv, deriv: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Tensor span-local values; index ``rx + (p+1) * ry``. Shape ``(..., (p+1)**2)``."""
    uv = np.asarray(uv, dtype=float)
    bx = local_basis_1d(p, uv[..., 0], deriv[0])
    by = local_basis_1d(p, uv[..., 1], deriv[1])
    return (by[..., :, None] * bx[..., None, :]).reshape(uv.shape[:-1] + ((p + 1) ** 2,))


def eval_univariate(degree: int, fn_index: int, x, deriv: int = 0, *,
                    origin: float = 0.0, spacing: float = 1.0, n_elements: int | None = None):
    """Evaluate uniform B-spline ``fn_index`` (or a derivative) at ``x``.

    With ``n_elements`` given, ``fn_index`` must lie in ``[-degree, n_elements)``
    and ``x`` in ``[origin, origin + n_elements * spacing]``.
    """
    if deriv > degree + 1:
        raise ValueError(f"derivative order {deriv} exceeds degree + 1")
    x = np.asarray(x, dtype=float)
    if n_elements is not None:
        if not -degree <= fn_index < n_elements:
            raise ValueError(f"function index {fn_index} outside [{-degree}, {n_elements})")
        lo, hi = origin, origin + n_elements * spacing
        if np.any((x < lo - 1e-12 * spacing) | (x > hi + 1e-12 * spacing)):
            raise ValueError("evaluation point outside the grid domain")
    t = (x - origin) / spacing - fn_index
    out = cardinal_bspline(degree, t, deriv) / spacing**deriv
    # right end of the domain belongs to the last span
    if n_elements is not None:
        at_end = np.isclose(x, origin + n_elements * spacing)
        if np.any(at_end):
            tl = np.where(at_end, t - 1e-13, t)
            out = np.where(at_end, cardinal_bspline(degree, tl, deriv) / spacing**deriv, out)
    return out if out.ndim else float(out)


def eval_tensor(grid: UniformSplineGrid, idx: TensorIndex, point, grad_order: int = 0):
    """Tensor-product B-spline value or derivative tensor at ``point``.

    ``grad_order`` 0 returns the value, 1 the gradient, ``k`` the array of all
    ``k``-th mixed partials with shape ``(dim,)*k``.
    """
    if grad_order > max(grid.degree) + 1:
        raise ValueError(f"unsupported derivative order {grad_order}")
    if idx.level != grid.level:
        grid = UniformSplineGrid(grid.degree, grid.origin, grid.spacing, grid.counts, idx.level)
    point = np.asarray(point, dtype=float)
    d = grid.dim
    h = grid.h
    tables = []
    for m in range(d):
        vals = [eval_univariate(grid.degree[m], idx.ij[m], point[m], k, origin=grid.origin[m],
                                spacing=h[m], n_elements=grid.n_elements[m])
                for k in range(grad_order + 1)]
        tables.append(vals)
    if grad_order == 0:
        return float(np.prod([tables[m][0] for m in range(d)]))
    out = np.zeros((d,) * grad_order)
    for multi in np.ndindex(*out.shape):
        orders = np.bincount(np.asarray(multi, dtype=int), minlength=d)
        out[multi] = np.prod([tables[m][orders[m]] for m in range(d)])
    return out


def subdivision_coefficients(degree: int) -> np.ndarray:
    """Two-scale coefficients ``2**-p * binom(p+1, j)`` for ``j = 0..p+1``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    return np.array([comb(degree + 1, j) for j in range(degree + 2)], dtype=float) / 2.0**degree


def subdivision_matrix(degree: int, child: int) -> np.ndarray:
    """Span-local refinement matrix for one child span (0 = left, 1 = right).

    Entry ``[r, q]`` is the coefficient of fine local function ``r`` in coarse
    local function ``q`` restricted to the child span.
    """
    c = subdivision_coefficients(degree)
    p = degree
    S = np.zeros((p + 1, p + 1))
    for r in range(p + 1):
        for q in range(p + 1):
            j = child + p + r - 2 * q
            if 0 <= j <= p + 1:
                S[r, q] = c[j]
    return S

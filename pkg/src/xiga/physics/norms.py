"""Error norms over the physical phases and on interfaces."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..quadrature import gauss_square, map_segments, map_triangles
from .assembly import BATCH
from .fields import FieldSolution
from .materials import MaterialPhase

ExactFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def _region_quadrature(mesh, r, order):
    reg = mesh.regions[r]
    if reg.tris is None:
        lo, hi = mesh.union.bounds(reg.cell)
        ref, w = gauss_square(order)
        return lo + ref * (hi - lo), w * np.prod(hi - lo)
    return map_triangles(reg.tris, 2 * order)


def _live_regions(mesh):
    return [r for r, reg in enumerate(mesh.regions) if reg.phase not in mesh.geometry.void]


def error_norms(sol: FieldSolution, exact: ExactFn | FieldSolution, order: int | None = None,
                phases=None) -> dict[str, float]:
    """L2 and H1-seminorm errors against an exact field or a reference solution.

    ``exact`` is either a callable returning values ``(n, nc)`` and gradients
    ``(n, nc, 2)`` at points, or a solution on the same integration mesh.
    Returns absolute errors and the norms of the reference.
    """
    mesh = sol.space.mesh
    order = order or sol.space.degree + 3
    regs = [r for r in _live_regions(mesh) if phases is None or mesh.regions[r].phase in phases]
    full = np.array([r for r in regs if mesh.regions[r].tris is None], dtype=np.int64)
    batches = [full[k:k + BATCH] for k in range(0, len(full), BATCH)]
    ref, w = gauss_square(order)
    sums = np.zeros(4)
    for chunk in batches:
        lo, hi = zip(*(mesh.union.bounds(mesh.regions[r].cell) for r in chunk))
        lo, size = np.array(lo), np.array(hi) - np.array(lo)
        X = lo[:, None, :] + ref[None] * size[:, None, :]
        W = w[None] * np.prod(size, axis=1)[:, None]
        sums += _error_sums(sol, exact, chunk, X, W)
    for r in regs:
        if mesh.regions[r].tris is not None:
            X, W = _region_quadrature(mesh, r, order)
            sums += _error_sums(sol, exact, [r], X[None], W[None])
    e0, e1, n0, n1 = np.sqrt(sums)
    return {"L2": e0, "H1": e1, "L2_ref": n0, "H1_ref": n1}


def _error_sums(sol, exact, regions, X, W) -> np.ndarray:
    v, g = sol.region_values(regions, X)
    if isinstance(exact, FieldSolution):
        ve, ge = exact.region_values(regions, X)
    else:
        ve, ge = exact(X.reshape(-1, 2))
        ve = np.asarray(ve, dtype=float).reshape(v.shape)
        ge = np.asarray(ge, dtype=float).reshape(g.shape)
    return np.array([np.sum(W * np.sum((v - ve) ** 2, axis=2)),
                     np.sum(W * np.sum((g - ge) ** 2, axis=(2, 3))),
                     np.sum(W * np.sum(ve ** 2, axis=2)),
                     np.sum(W * np.sum(ge ** 2, axis=(2, 3)))])


compute_error_norms = error_norms


def von_mises(u_grad: np.ndarray, material: MaterialPhase, dT: np.ndarray | float = 0.0,
              plane: str = "stress") -> np.ndarray:
    """Von Mises stress from displacement gradients ``(..., 2, 2)``."""
    D = material.elasticity(plane)
    eps = np.stack([u_grad[..., 0, 0], u_grad[..., 1, 1], u_grad[..., 0, 1] + u_grad[..., 1, 0]], axis=-1)
    sig = eps @ D
    st = material.thermal_modulus(plane) * np.asarray(dT)
    sxx, syy, sxy = sig[..., 0] - st, sig[..., 1] - st, sig[..., 2]
    if plane == "strain":
        szz = material.nu * (sxx + syy)
        return np.sqrt(0.5 * ((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2) + 3 * sxy ** 2)
    return np.sqrt(sxx ** 2 - sxx * syy + syy ** 2 + 3.0 * sxy ** 2)


def interface_von_mises_error(u: FieldSolution, T: FieldSolution | None, u_ref: FieldSolution,
                              T_ref: FieldSolution | None, materials: dict[int, MaterialPhase],
                              plane: str = "stress", n_points: int | None = None) -> dict[str, float]:
    """L2 error of the von Mises stress on material interfaces, both sides summed."""
    mesh = u.space.mesh
    I = mesh.interfaces
    void = mesh.geometry.void
    n_points = n_points or u.space.degree + 3
    err = ref = 0.0
    for k in range(len(I)):
        pm, pn = int(I.phase_m[k]), int(I.phase_n[k])
        if pm in void or pn in void:
            continue
        X, W = map_segments(I.p0[k], I.p1[k], n_points)
        for r, ph in ((int(I.region_m[k]), pm), (int(I.region_n[k]), pn)):
            mat = materials[ph]
            vals = []
            for us, Ts in ((u, T), (u_ref, T_ref)):
                _, g = us.region_values([r], X[None])
                dT = 0.0
                if Ts is not None:
                    tv, _ = Ts.region_values([r], X[None])
                    dT = tv[0, :, 0] - mat.T0
                vals.append(von_mises(g[0], mat, dT, plane))
            err += float(W @ (vals[0] - vals[1]) ** 2)
            ref += float(W @ vals[1] ** 2)
    return {"L2": np.sqrt(err), "L2_ref": np.sqrt(ref)}

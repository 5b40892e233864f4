"""Sparse direct solves and a condition number estimate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from ..errors import SingularSystemError
from .assembly import LinearSystem

log = logging.getLogger(__name__)


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    condition: float | None = None


def _factor(A: csr_matrix):
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= 1e-300:
        k = int(np.argmin(piv))
        raise SingularSystemError(f"zero pivot {piv[k]:.3e} at position {k}")
    return lu


def condition_estimate(A: csr_matrix, lu=None, iterations: int = 50) -> float:
    """Ratio of extreme singular values from power and inverse iteration.

    ``A^T A`` is iterated forward for the largest and through the LU factors
    for the smallest singular value.
    """
    lu = lu if lu is not None else _factor(A)
    n = A.shape[0]
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    smax = 0.0
    for _ in range(iterations):
        y = A.T @ (A @ x)
        smax = np.linalg.norm(y)
        x = y / smax
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    inv = 0.0
    for _ in range(iterations):
        y = lu.solve(lu.solve(x), trans="T")
        inv = np.linalg.norm(y)
        x = y / inv
    return float(np.sqrt(smax * inv))


def solve_system(system: LinearSystem, estimate_condition: bool = False) -> SolveResult:
    """Solve ``A x = b`` with a sparse LU factorization."""
    A = system.A
    lu = _factor(A)
    x = lu.solve(system.b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution is not finite; the system is singular")
    bnorm = max(np.linalg.norm(system.b), 1e-300)
    res = float(np.linalg.norm(A @ x - system.b) / bnorm)
    if res > 1e-6:
        log.warning("relative residual %.3e after direct solve", res)
    cond = condition_estimate(A, lu) if estimate_condition else None
    return SolveResult(x, res, cond)


@dataclass
class StaggeredResult:
    temperature: "FieldSolution"
    displacement: "FieldSolution"
    thermal: SolveResult
    elastic: SolveResult


def solve_staggered(T_space, u_space, materials, T_bcs, u_bcs, config=None, heat_source=None,
                    body_force=None, estimate_condition: bool = False) -> StaggeredResult:
    """Solve heat conduction, then elasticity driven by the temperature."""
    from .assembly import assemble
    from .fields import FieldSolution

    Ts = assemble(T_space, materials, T_bcs, config, source=heat_source)
    rT = solve_system(Ts, estimate_condition)
    T = FieldSolution(T_space, rT.x)
    us = assemble(u_space, materials, u_bcs, config, source=body_force, temperature=T)
    ru = solve_system(us, estimate_condition)
    return StaggeredResult(T, FieldSolution(u_space, ru.x), rT, ru)

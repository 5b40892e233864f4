"""Gauss rules on the unit interval, unit square and reference triangle."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss-Legendre rule on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_square(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor rule on ``[0, 1]^2``; points ``(n*n, 2)`` with x fastest."""
    x, w = gauss_1d(n)
    pts = np.stack([np.tile(x, n), np.repeat(x, n)], axis=-1)
    return pts, np.outer(w, w).ravel()


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the triangle ``(0,0), (1,0), (0,1)``.

    Exact for polynomials of total degree ``degree``; weights sum to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    u, wu = gauss_1d(n)
    t, wt = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (1.0 + t)
    wv = 0.25 * wt
    U, V = np.meshgrid(u, v, indexing="xy")
    pts = np.stack([(U * (1.0 - V)).ravel(), V.ravel()], axis=-1)
    return pts, np.outer(wv, wu).ravel()


def map_triangles(tris: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points ``(nt*nq, 2)`` and weights on physical triangles ``(nt, 3, 2)``."""
    ref, w = triangle_rule(degree)
    tris = np.asarray(tris, dtype=float)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = b - a, c - a
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = a[:, None, :] + ref[None, :, 0, None] * e1[:, None, :] + ref[None, :, 1, None] * e2[:, None, :]
    return pts.reshape(-1, 2), (det[:, None] * w[None, :]).ravel()


def map_segments(p0: np.ndarray, p1: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss points ``(ns*n, 2)`` and weights on segments ``p0 -> p1`` (arrays ``(ns, 2)``)."""
    x, w = gauss_1d(n)
    p0, p1 = np.atleast_2d(p0), np.atleast_2d(p1)
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    pts = p0[:, None, :] + x[None, :, None] * d[:, None, :]
    return pts.reshape(-1, 2), (length[:, None] * w[None, :]).ravel()

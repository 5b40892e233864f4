import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_forest
from xiga.errors import PreconditionError
from xiga.extraction import (build_extraction, build_union, compose_extraction, descent_chain,
                             href_extraction_table, lagrange_basis_2d, lagrange_nodes_2d)
from xiga.polytree import init_base
from xiga.thb import build_thb


def extraction_error(union, basis, rng, n=20):
    ext = build_extraction(union, basis)
    worst = 0.0
    for c in range(len(union)):
        lo, hi = union.bounds(c)
        uv = rng.random((n, 2))
        X = lo + uv * (hi - lo)
        approx = lagrange_basis_2d(basis.degree, uv) @ ext.T[c]
        for k, fn in enumerate(ext.funcs[c]):
            exact = basis.evaluate(X, coeffs=np.eye(basis.n_functions)[fn])
            worst = max(worst, float(np.abs(approx[:, k] - exact).max()))
    return worst


@pytest.mark.parametrize("p", [1, 2, 3])
def test_single_field_extraction_is_exact(p, rng):
    forest = random_forest(7, p, levels=2, counts=(3, 3), fraction=0.4)
    union = build_union(forest, (0,))
    assert extraction_error(union, build_thb(forest, 0, p), rng) <= 1e-12


def test_two_field_union_with_level_gap(rng):
    forest = init_base(3, 3, ((0, 0), (1, 1)), n_ai=2)
    forest.refine_for_ai(1, [(0, 1, 1)], 2)
    forest.refine_for_ai(1, [(1, 2, 2), (1, 3, 3)], 2)
    union = build_union(forest, (0, 1))
    assert max(c[0] for c in union.cells) == 2
    for ai in (0, 1):
        assert extraction_error(union, build_thb(forest, ai, 2), rng, n=10) <= 1e-12


def test_union_covers_box_and_refines():
    forest = random_forest(3, 2, levels=2, n_ai=2)
    union = build_union(forest, (0, 1), geom_refine=1)
    area = sum(np.prod(union.size(n)) for n in range(len(union)))
    assert area == pytest.approx(1.0)
    assert min(c[0] for c in union.cells) >= 1
    assert len(build_union(forest, (0,), min_level=3).cells) >= 36 * 64 // 64
    with pytest.raises(PreconditionError):
        build_union(forest, ())


def test_facets_cover_interior_edges():
    forest = random_forest(11, 1, levels=2, counts=(3, 3))
    union = build_union(forest, (0,))
    length = sum(f.span[1] - f.span[0] for f in union.facets())
    perim = sum(2 * np.sum(union.size(n)) for n in range(len(union)))
    # every interior edge piece is counted once, the box boundary (length 4) never
    assert length == pytest.approx((perim - 4.0) / 2)


def test_href_table_properties():
    for p in (1, 2, 3):
        for child in range(4):
            T = href_extraction_table(child, p)
            np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-13)
    with pytest.raises(PreconditionError):
        href_extraction_table(4, 2)


@given(st.integers(1, 4), st.integers(0, 3))
def test_href_table_maps_child_nodes(p, child):
    T = href_extraction_table(child, p)
    off = np.array([child & 1, child >> 1])
    uv = np.random.default_rng(p).random((5, 2))
    parent = lagrange_basis_2d(p, (uv + off) / 2)
    np.testing.assert_allclose(lagrange_basis_2d(p, uv) @ T, parent, atol=1e-12)


def test_lagrange_nodes_interpolate():
    p = 3
    np.testing.assert_allclose(lagrange_basis_2d(p, lagrange_nodes_2d(p)), np.eye(16), atol=1e-13)


def test_descent_chain():
    assert descent_chain((0, 1, 1), (2, 5, 6)) == [2, 1]
    with pytest.raises(PreconditionError):
        descent_chain((0, 0, 0), (1, 3, 3))
    forest = init_base(2, 2, ((0, 0), (1, 1)))
    basis = build_thb(forest, 0, 2)
    T = compose_extraction(basis, 0, (1, 1, 0))
    assert T.shape == (9, len(basis.elem_funcs[0]))

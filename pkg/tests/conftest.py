import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xiga.bspline import local_basis_2d
from xiga.polytree import init_base

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_forest(seed: int, degree: int, levels: int = 3, counts=(6, 6), n_ai: int = 1, fraction=0.25):
    """Forest refined ``levels`` times at randomly chosen finest cells of every AI."""
    rng = np.random.default_rng(seed)
    forest = init_base(*counts, ((0.0, 0.0), (1.0, 1.0)), n_ai=n_ai)
    for ai in range(n_ai):
        for _ in range(levels):
            act = forest.active_mesh(ai)
            top = max(c[0] for c in act)
            cand = [c for c in act if c[0] == top]
            k = max(1, int(len(cand) * fraction))
            pick = rng.choice(len(cand), k, replace=False)
            forest.refine_for_ai(ai, [cand[i] for i in pick], degree)
    return forest


def basis_matrix(basis, pts):
    """Values of every basis function at points, ``(n_pts, n_functions)``."""
    p = basis.degree
    out = np.zeros((len(pts), basis.n_functions))
    elems = basis.locate(pts)
    for e in np.unique(elems):
        sel = np.flatnonzero(elems == e)
        lo, hi = basis.forest.cell_bounds(basis.elements[e])
        local = local_basis_2d(p, (pts[sel] - lo) / (hi - lo))
        out[np.ix_(sel, basis.elem_funcs[e])] = local @ basis.elem_coeffs[e].T
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the end-of-run table."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

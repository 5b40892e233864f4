import numpy as np
import pytest

from xiga.discretize import FieldSpec, discretize
from xiga.errors import ConfigError, SequencingError
from xiga.geometry import LevelSetGeometry, circle, half_plane
from xiga.physics import (Assembler, BoundaryCondition, FieldSolution, MaterialPhase, WeakFormConfig, assemble,
                          assemble_ghost, error_norms, interface_penalty, interface_weights, solve_staggered,
                          solve_system, von_mises)
from xiga.polytree import init_base

BOX = ((0.0, 0.0), (1.0, 1.0))
SIDES = ("left", "right", "top", "bottom")


def patch_forest(p):
    forest = init_base(6, 6, BOX)
    forest.refine_for_ai(0, [(0, 2, 2), (0, 3, 2)], p)
    return forest


def sample(geo, n=300, seed=1):
    P = np.random.default_rng(seed).random((n, 2))
    return P[~np.isin(geo.classify(P), list(geo.void))]


def linear_T(X):
    return 0.3 - 0.7 * X[:, 0] + 0.2 * X[:, 1]


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("void", [(0,), ()])
def test_thermal_patch_is_exact(p, void):
    geo = LevelSetGeometry.single(circle((0.52, 0.47), 0.23), void=void)
    disc = discretize(patch_forest(p), geo, {"T": FieldSpec(0, p)})
    mats = {0: MaterialPhase(kappa=3.0), 1: MaterialPhase(kappa=3.0)}
    bcs = [BoundaryCondition("dirichlet", w, linear_T) for w in SIDES]
    if void:
        bcs.append(BoundaryCondition("dirichlet", "immersed", linear_T))
    space = disc.spaces["T"]
    x = solve_system(assemble(space, mats, bcs)).x
    P = sample(geo)
    v, g = FieldSolution(space, x).evaluate(P)
    assert np.abs(v[:, 0] - linear_T(P)).max() <= 1e-9
    np.testing.assert_allclose(g[:, 0], np.tile([-0.7, 0.2], (len(P), 1)), atol=1e-8)
    # the exact field has no jumps, so the ghost energy vanishes
    G = assemble_ghost(space, mats).A
    assert x @ (G @ x) <= 1e-12


def test_thermal_patch_mixed_conditions():
    geo = LevelSetGeometry.single(half_plane((0.47, 0.5), np.pi / 2))
    disc = discretize(patch_forest(2), geo, {"T": FieldSpec(0, 2)})
    kappa = {0: 1.0, 1: 5.0}
    mats = {k: MaterialPhase(kappa=v) for k, v in kappa.items()}
    # piecewise linear in x: flux continuity fixes each slope
    bcs = [BoundaryCondition("dirichlet", "left", 0.0), BoundaryCondition("neumann", "right", 1.0)]
    space = disc.spaces["T"]
    sol = FieldSolution(space, solve_system(assemble(space, mats, bcs)).x)
    P = sample(geo)
    _, g = sol.evaluate(P)
    ph = geo.classify(P)
    for k in (0, 1):
        np.testing.assert_allclose(g[ph == k, 0, 0] * kappa[k], 1.0, atol=1e-9)
    np.testing.assert_allclose(g[:, 0, 1], 0.0, atol=1e-9)


def linear_u(X):
    return np.stack([0.1 + 0.3 * X[:, 0] - 0.2 * X[:, 1], -0.2 + 0.1 * X[:, 0] + 0.5 * X[:, 1]], axis=-1)


@pytest.mark.parametrize("p", [1, 2])
def test_elastic_patch_is_exact(p):
    mat = MaterialPhase(E=2.0, nu=0.3)
    D = mat.elasticity()
    sxx, syy, sxy = D @ np.array([0.3, 0.5, -0.2 + 0.1])
    geo = LevelSetGeometry.single(circle((0.52, 0.47), 0.23), void=(0,))
    disc = discretize(patch_forest(p), geo, {"u": FieldSpec(0, p, 2)})
    bcs = [BoundaryCondition("dirichlet", "left", linear_u), BoundaryCondition("dirichlet", "bottom", linear_u),
           BoundaryCondition("dirichlet", "immersed", linear_u),
           BoundaryCondition("neumann", "top", (sxy, syy)), BoundaryCondition("neumann", "right", (sxx, sxy))]
    space = disc.spaces["u"]
    sol = FieldSolution(space, solve_system(assemble(space, {1: mat}, bcs)).x)
    P = sample(geo)
    v, _ = sol.evaluate(P)
    assert np.abs(v - linear_u(P)).max() <= 1e-9


def test_free_thermal_expansion_is_stress_free():
    geo = LevelSetGeometry.single(half_plane((0.45, 0.5), 1.1))
    forest = init_base(5, 5, BOX, n_ai=2)
    disc = discretize(forest, geo, {"T": FieldSpec(0, 1), "u": FieldSpec(1, 2, 2)})
    mat = MaterialPhase(E=3.0, nu=0.25, alpha=2e-3, T0=1.0)
    mats = {0: mat, 1: mat}
    T_bcs = [BoundaryCondition("dirichlet", w, 6.0) for w in SIDES]
    u_bcs = [BoundaryCondition("dirichlet", "left", 0.0, (0,)), BoundaryCondition("dirichlet", "bottom", 0.0, (1,))]
    res = solve_staggered(disc.spaces["T"], disc.spaces["u"], mats, T_bcs, u_bcs)
    P = sample(geo)
    T, _ = res.temperature.evaluate(P)
    u, g = res.displacement.evaluate(P)
    np.testing.assert_allclose(T[:, 0], 6.0, atol=1e-10)
    np.testing.assert_allclose(u, 2e-3 * 5.0 * P, atol=1e-10)
    assert von_mises(g, mat, T[:, 0] - mat.T0).max() <= 1e-9


def test_zero_expansion_decouples_and_order_is_enforced():
    geo = LevelSetGeometry.single(half_plane((0.45, 0.5), 1.1))
    disc = discretize(init_base(3, 3, BOX), geo, {"u": FieldSpec(0, 1, 2)})
    bcs = [BoundaryCondition("dirichlet", "left", 0.0), BoundaryCondition("neumann", "right", (1.0, 0.0))]
    plain = {0: MaterialPhase(E=1.0), 1: MaterialPhase(E=1.0)}
    a = assemble(disc.spaces["u"], plain, bcs)
    b = assemble(disc.spaces["u"], plain, bcs, thermal_coupling=False)
    assert abs(a.A - b.A).max() == 0.0
    np.testing.assert_array_equal(a.b, b.b)
    hot = {0: MaterialPhase(alpha=1e-3), 1: MaterialPhase(alpha=1e-3)}
    with pytest.raises(SequencingError):
        assemble(disc.spaces["u"], hot, bcs)


def test_interface_weights_and_penalty():
    assert interface_weights(3.0, 1.0, 1.0, 1.0) == pytest.approx((0.75, 0.25))
    assert interface_weights(1.0, 1.0, 1.0, 3.0) == pytest.approx((0.75, 0.25))
    assert interface_weights(3.0, 1.0, 1.0, 1.0, "modulus_over_measure") == pytest.approx((0.25, 0.75))
    # equal sides: 2 c |gamma| / (2 meas / k)
    assert interface_penalty(8.0, 0.5, 0.25, 2.0, 0.25, 2.0) == pytest.approx(8.0 * 0.5 * 2.0 / 0.25)
    assert interface_penalty(8.0, 0.5, 0.125, 2.0, 0.125, 2.0) == pytest.approx(
        2 * interface_penalty(8.0, 0.5, 0.25, 2.0, 0.25, 2.0))
    cfg = WeakFormConfig()
    assert cfg.dirichlet_constant("T", 2) == cfg.interface_constant("u", 2) == 18.0
    assert WeakFormConfig(c_D_u=5.0).dirichlet_constant("u", 3) == 5.0
    with pytest.raises(ConfigError):
        WeakFormConfig(gamma_G_T=-1.0)


def test_dirichlet_penalty_scales_inversely_with_cell_size():
    diag = []
    for n in (2, 4):
        geo = LevelSetGeometry.single(half_plane((5.0, 0.5), np.pi / 2))
        disc = discretize(init_base(n, n, BOX), geo, {"T": FieldSpec(0, 1)})
        asm = Assembler(disc.spaces["T"], {0: MaterialPhase(), 1: MaterialPhase()})
        asm.dirichlet(BoundaryCondition("dirichlet", "left", 0.0))
        plain = Assembler(disc.spaces["T"], {0: MaterialPhase(), 1: MaterialPhase()},
                          WeakFormConfig(c_D_T=0.0))
        plain.dirichlet(BoundaryCondition("dirichlet", "left", 0.0))
        # corner function at the origin: penalty times the integral of its square
        d = (asm.system().A - plain.system().A).diagonal()[0]
        diag.append(d * n)  # the integral of the square scales with the edge length 1 / n
    assert diag[1] == pytest.approx(2 * diag[0])


def test_ghost_penalty_two_element_hand_value():
    geo = LevelSetGeometry.single(half_plane((0.3, 0.5), np.pi / 2))
    disc = discretize(init_base(2, 1, ((0.0, 0.0), (2.0, 1.0))), geo, {"T": FieldSpec(0, 1)})
    space = disc.spaces["T"]
    mats = {0: MaterialPhase(kappa=2.0), 1: MaterialPhase(kappa=2.0)}
    assert not disc.mesh.ghost_facets(0)
    enr = space.dofs.enrichments[0]
    nodal = np.array([1.0, 3.0, 2.0])  # values at x = 0, 1, 2, constant in y
    x = np.zeros(space.n_dof)
    for fn, (_, i, _) in enumerate(disc.bases["T"].functions):
        for lev in range(enr.n_levels[fn]):
            x[enr.level_start[fn] + lev] = nodal[i + 1]
    G = assemble_ghost(space, mats).A
    # gamma_G * kappa * h^(2p-1) * facet length * slope jump squared
    jump = (2.0 - 3.0) - (3.0 - 1.0)
    assert x @ (G @ x) == pytest.approx(0.001 * 2.0 * 1.0 * 1.0 * jump ** 2, rel=1e-12)


def test_error_norms_of_zero_field():
    geo = LevelSetGeometry.single(half_plane((5.0, 0.5), np.pi / 2))
    disc = discretize(init_base(3, 3, BOX), geo, {"T": FieldSpec(0, 2)})
    sol = FieldSolution(disc.spaces["T"], np.zeros(disc.n_dof("T")))

    def exact(X):
        return X[:, :1], np.tile([[[1.0, 0.0]]], (len(X), 1, 1))

    e = error_norms(sol, exact)
    assert e["L2"] == pytest.approx(1 / np.sqrt(3), abs=1e-13)
    assert e["H1"] == pytest.approx(1.0, abs=1e-13)
    assert e["L2_ref"] == pytest.approx(e["L2"])


def test_config_errors():
    geo = LevelSetGeometry.single(half_plane((0.5, 0.5), np.pi / 2), void=(0,))
    disc = discretize(init_base(2, 2, BOX), geo, {"T": FieldSpec(0, 1)})
    with pytest.raises(ConfigError, match="no non-void boundary"):
        assemble(disc.spaces["T"], {1: MaterialPhase()}, [BoundaryCondition("dirichlet", "left", 0.0)])
    with pytest.raises(ConfigError, match="no material"):
        assemble(disc.spaces["T"], {0: MaterialPhase()}, [])
    with pytest.raises(ConfigError):
        BoundaryCondition("robin", "left")
    with pytest.raises(ConfigError):
        BoundaryCondition("dirichlet", "inside")
    with pytest.raises(ConfigError):
        MaterialPhase(nu=0.5)

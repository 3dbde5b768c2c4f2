import numpy as np
import pytest
from numpy.testing import assert_allclose

from krflab.cp1 import (
    AutomorphismElement,
    CP1Geometry,
    HolomorphicField,
    gauge_potential,
    pullback_potential,
    sl2_basis,
)
from krflab.functionals import (
    PathOfPotentials,
    PathTooCoarse,
    a_normalization,
    aubin_I,
    aubin_J,
    evaluate_W,
    futaki_invariant,
    k_energy_explicit,
    k_energy_path,
    modified_futaki,
    modified_k_energy,
    normalization_I,
    normalize_W_density,
    normalize_to_H0,
    report,
)

from conftest import small_potentials


def fine_copy(phi, factor=2):
    g = phi.geometry
    fine = CP1Geometry(g.L, nlat=factor * g.grid.nlat, nlon=factor * g.grid.nlon)
    return fine.field(phi.coeffs)


def test_trivial_values(geom24):
    g = geom24
    z = g.zero()
    for fn in (normalization_I, aubin_I, aubin_J, k_energy_explicit, a_normalization):
        assert abs(fn(z)) <= 1e-15
    c = g.constant(0.37)
    assert_allclose(normalization_I(c), 0.37, rtol=1e-14)
    assert_allclose(a_normalization(c), -0.37, rtol=1e-13)
    assert abs(aubin_I(c)) <= 1e-15 and abs(aubin_J(c)) <= 1e-15
    assert abs(normalize_to_H0(c).mean()) <= 1e-15


def test_double_resolution_oracle(geom24):
    for phi in small_potentials(geom24, 4, c2=0.4, seed=11):
        fine = fine_copy(phi)
        for fn in (normalization_I, a_normalization, k_energy_explicit):
            assert abs(fn(phi) - fn(fine)) <= 1e-10


def test_normalize_to_H0(geom24):
    for phi in small_potentials(geom24, 5, c2=0.4, seed=12):
        assert np.max(np.abs(normalize_to_H0(phi).coeffs - phi.coeffs)) <= 1e-12
        out = normalize_to_H0(phi.shift(1.3))
        assert abs(normalization_I(out)) <= 1e-10


def test_aubin_chain(geom24):
    for phi in small_potentials(geom24, 30, c2=0.6, seed=13):
        i, j = aubin_I(phi), aubin_J(phi)
        assert i >= -1e-12
        assert 2 * (i - j) - i >= -1e-12
        assert i - 2 * (i - j) >= -1e-12
    # for n = 1 the chain is tight: I = 2 J in closed form
    phi = small_potentials(geom24, 1, c2=0.5, seed=14)[0]
    assert_allclose(aubin_I(phi), 2 * aubin_J(phi), rtol=1e-12)


def test_k_energy_definitions_agree(geom24):
    for phi in small_potentials(geom24, 5, c2=0.3, seed=15):
        assert abs(k_energy_path(PathOfPotentials.straight(phi, K=64)) - k_energy_explicit(phi)) <= 1e-6
        assert k_energy_explicit(phi) >= 0


def test_k_energy_path_independence(geom24):
    phi = small_potentials(geom24, 1, c2=0.3, seed=16)[0]
    bump = small_potentials(geom24, 1, c2=0.2, seed=17)[0]
    curved = PathOfPotentials.from_function(
        lambda s: phi * s + bump * (s * (1 - s)), 64, lambda s: phi + bump * (1 - 2 * s))
    straight = PathOfPotentials.straight(phi, K=64)
    assert abs(k_energy_path(curved) - k_energy_path(straight)) <= 1e-6
    const = PathOfPotentials.from_function(lambda s: phi, 16, lambda s: geom24.zero())
    assert k_energy_path(const) == 0.0


def test_coarse_path_rejected(geom24):
    phi = small_potentials(geom24, 1, c2=0.8, seed=18)[0]
    bump = small_potentials(geom24, 1, c2=0.5, seed=19)[0]
    wiggle = PathOfPotentials.from_function(lambda s: phi * s + bump * np.sin(6 * np.pi * s), 4)
    with pytest.raises(PathTooCoarse):
        k_energy_path(wiggle, tol=1e-8)


def test_path_validation(geom24):
    z = geom24.zero()
    with pytest.raises(ValueError):
        PathOfPotentials([0.0, 0.5], [z, z])
    with pytest.raises(ValueError):
        PathOfPotentials([0.0, 0.7, 0.6, 1.0], [z, z, z, z])


def test_k_energy_vanishes_on_gauge_orbit(geom32, rng):
    B = sl2_basis()
    for _ in range(3):
        s = AutomorphismElement.exp(sum(c * E for c, E in zip(rng.normal(size=3) * 0.2, B[:3])))
        assert abs(k_energy_explicit(gauge_potential(s, geom32))) <= 1e-8


def test_a_normalization_continuity(geom24, rng):
    phi = small_potentials(geom24, 1, c2=0.3, seed=20)[0]
    dA = geom24.grid.zeros()
    dA[geom24.grid.mask] = 1e-6 * rng.normal(size=geom24.grid.mask.sum())
    moved = geom24.field(phi.coeffs + dA)
    assert abs(a_normalization(moved) - a_normalization(phi)) <= 1e-4


def test_a_plus_nu_is_minus_I(geom24):
    # for n = 1 these functionals satisfy a + nu = -I identically
    for phi in small_potentials(geom24, 5, c2=0.4, seed=21):
        phi = phi.shift(0.2)
        assert_allclose(a_normalization(phi) + k_energy_explicit(phi), -normalization_I(phi), atol=1e-13)


def test_futaki_vanishes_and_is_class_invariant(geom32):
    g = geom32
    pots = [g.zero()] + small_potentials(g, 10, c2=0.3, seed=22)
    for E in sl2_basis():
        Y = HolomorphicField(E)
        vals = np.array([futaki_invariant(Y, p) for p in pots])
        assert np.max(np.abs(vals)) <= 1e-8
        assert np.var(vals) <= 1e-12
    assert futaki_invariant(HolomorphicField.zero(), pots[1]) == 0


def test_modified_futaki_reductions(geom24, rng):
    g = geom24
    phi, dot = small_potentials(g, 2, c2=0.3, seed=23)
    Y = HolomorphicField(sl2_basis()[0])
    assert modified_futaki(HolomorphicField(sl2_basis()[1]), HolomorphicField.zero(), phi, dot) == 0
    vals = Y.derivative(dot) * phi.ratio
    plain = -complex(g.grid.integrate(vals.real), g.grid.integrate(vals.imag))
    assert abs(modified_futaki(HolomorphicField.zero(), Y, phi, dot) - plain) <= 1e-13


def test_modified_k_energy_reductions(geom24):
    phi = small_potentials(geom24, 1, c2=0.3, seed=24)[0]
    path = PathOfPotentials.straight(phi, K=64)
    assert abs(modified_k_energy(HolomorphicField.zero(), path) - k_energy_path(path)) <= 1e-8
    const = PathOfPotentials.from_function(lambda s: phi, 8, lambda s: geom24.zero())
    X = HolomorphicField(sl2_basis()[2] * 0.3)
    assert modified_k_energy(X, const) == 0.0


def test_W_constant_density(geom24):
    g = geom24
    tau = 0.5
    f = normalize_W_density(g.zero(), g.zero(), tau)
    # (4 pi tau)^{-1/2} e^{-f} V = 1
    c = np.log((4 * np.pi * tau) ** -0.5 * g.V)
    assert_allclose(f.mean(), c, rtol=1e-13)
    expected = (4 * np.pi * tau) ** -0.5 * np.exp(-c) * g.V * (tau * g.S_bar + c - 1)
    assert_allclose(evaluate_W(g.zero(), f, tau), expected, rtol=1e-12)
    with pytest.raises(ValueError, match="constraint"):
        evaluate_W(g.zero(), g.zero(), tau)
    with pytest.raises(ValueError):
        evaluate_W(g.zero(), f, -1.0)


def test_W_refinement_and_gauge_invariance(geom32, rng):
    g = geom32
    phi, f0 = small_potentials(g, 2, c2=0.2, seed=25, lmax=4)
    tau = 0.7
    f = normalize_W_density(phi, f0, tau)
    W = evaluate_W(phi, f, tau)
    phi_f, f_f = fine_copy(phi), fine_copy(f)
    assert abs(evaluate_W(phi_f, normalize_W_density(phi_f, f_f, tau), tau) - W) <= 1e-8

    s = AutomorphismElement.exp(0.1 * sl2_basis()[0] + 0.05 * sl2_basis()[4])
    moved_phi = pullback_potential(s, phi)
    th, lon = g.points_of(s.apply(g.W))
    moved_f = g.from_values(g.grid.evaluate(f.coeffs, th, lon))
    moved_f = normalize_W_density(moved_phi, moved_f, tau)
    assert abs(evaluate_W(moved_phi, moved_f, tau) - W) <= 1e-8


def test_report(geom24):
    phi = small_potentials(geom24, 1, c2=0.2, seed=26)[0]
    rep = report(phi, extra=1.5).to_dict()
    assert set(rep["values"]) == {"I", "AubinI", "AubinJ", "nu", "a", "extra"}
    assert rep["metadata"]["bandlimit"] == 24
    assert all(np.isfinite(v) for v in rep["values"].values())

import numpy as np
import pytest
from numpy.testing import assert_allclose

from krflab.cp1 import (
    AdmissibilityError,
    AutomorphismElement,
    CP1Geometry,
    GeometryMismatch,
    HolomorphicField,
    build_geometry,
    complex_laplacian,
    gauge_potential,
    integrate,
    norms,
    pullback_potential,
    ricci_potential,
    scalar_curvature,
    sl2_basis,
    spectrum,
    theta_of,
    volume_ratio,
)
from krflab.functionals import k_energy_explicit

from conftest import small_potentials


def random_sigma(rng, size):
    """Random unit-determinant element with Hermitian part of Frobenius norm ``size``."""
    B = sl2_basis()
    H = sum(c * E for c, E in zip(rng.normal(size=3), B[:3]))
    K = sum(c * E for c, E in zip(rng.normal(size=3), B[3:]))
    H *= size / np.linalg.norm(H)
    return AutomorphismElement.exp(H + K)


def closed_form_rho(sigma, g):
    # independent oracle in the affine chart z = tan(theta/2) e^{i phi}
    th, ph = np.meshgrid(g.grid.theta, g.grid.phi, indexing="ij")
    z = np.tan(th / 2) * np.exp(1j * ph)
    a, b, c, d = sigma.entries
    return 2 * np.log((np.abs(a * z + b) ** 2 + np.abs(c * z + d) ** 2) / (1 + np.abs(z) ** 2))


def test_small_bandlimit_rejected():
    with pytest.raises(ValueError, match="too small"):
        CP1Geometry(4)


def test_volume_and_reference_curvature():
    g = build_geometry(16)
    assert_allclose(g.V, 4 * np.pi)
    assert_allclose(scalar_curvature(g.zero()), 1.0, atol=1e-13)
    assert_allclose(integrate(g.constant(1.0)), CP1Geometry(8).grid.integrate(np.ones(CP1Geometry(8).grid.shape)), atol=1e-12)


def test_laplacian_eigenvalues(geom24):
    g = geom24
    assert_allclose(complex_laplacian(g.constant(2.0)).coeffs, 0, atol=1e-15)
    for l in range(g.L + 1):
        for m in (0, l):
            Y = g.harmonic(l, m, "sin" if m else "cos")
            res = complex_laplacian(Y).values + 0.5 * l * (l + 1) * Y.values
            assert np.max(np.abs(res)) <= 1e-10
    Y1 = g.harmonic(1, 1)
    Y2 = g.harmonic(2, 1, "sin")
    assert_allclose(complex_laplacian(Y1).values, -Y1.values, atol=1e-13)
    assert_allclose(complex_laplacian(Y2).values, -3 * Y2.values, atol=1e-13)


def test_volume_ratio(geom24):
    g = geom24
    assert_allclose(volume_ratio(g.zero()), 1.0)
    eps = 1e-3
    Y = g.harmonic(2, 0)
    assert_allclose(volume_ratio(Y * eps), 1 - 3 * eps * Y.values, atol=1e-14)
    for phi in small_potentials(g, 5, c2=0.5):
        assert abs(g.grid.integrate(volume_ratio(phi)) - 4 * np.pi) <= 1e-10
    with pytest.raises(AdmissibilityError) as info:
        volume_ratio(Y * 2.0)
    assert info.value.minimum < 0


def test_integrate_against_measures(geom24, rng):
    g = geom24
    phi = small_potentials(g, 1, c2=0.3)[0]
    assert_allclose(integrate(g.constant(1.0)), 4 * np.pi, rtol=1e-14)
    assert_allclose(integrate(g.constant(1.0), phi), 4 * np.pi, rtol=1e-12)
    # double-resolution oracle: products of degree <= 2L are exact on both grids
    fine = CP1Geometry(24, nlat=60, nlon=120)
    f = g.field(phi.coeffs * 3.0 + 1.0)
    f_fine = fine.field(f.coeffs)
    phi_fine = fine.field(phi.coeffs)
    assert_allclose(integrate(f, phi), integrate(f_fine, phi_fine), rtol=1e-10)


def test_scalar_curvature_mean_and_linearization(geom24):
    g = geom24
    phi = small_potentials(g, 1, c2=0.3, seed=3)[0]
    S = scalar_curvature(phi)
    assert abs(g.grid.integrate(S * volume_ratio(phi)) / g.V - 1.0) <= 1e-8
    # dS/d eps at 0 is -(Delta^2 + Delta) phi
    lap = phi.laplacian_coeffs
    lin = g.grid.synthesize(-(-g.eigenvalues * lap + lap))
    errs = []
    for eps in (1e-3, 5e-4):
        fd = (scalar_curvature(phi * eps) - scalar_curvature(phi * -eps)) / (2 * eps)
        errs.append(np.max(np.abs(fd - lin)))
    assert errs[1] < errs[0] / 3.5


def test_ricci_potential(geom32, rng):
    g = geom32
    assert_allclose(ricci_potential(g.zero()).values, 0, atol=1e-14)
    phi = small_potentials(g, 1, c2=0.3, seed=4)[0]
    h = ricci_potential(phi)
    assert abs(g.grid.integrate(np.exp(h.values) * volume_ratio(phi)) - 4 * np.pi) <= 1e-8
    rho = gauge_potential(random_sigma(rng, 0.3), g)
    assert np.max(np.abs(ricci_potential(rho).values)) <= 1e-8


def test_gauge_potential(geom32, rng):
    g = geom32
    assert_allclose(gauge_potential(AutomorphismElement.identity(), g).values, 0, atol=1e-14)
    for _ in range(5):
        s = random_sigma(rng, 0.4)
        rho = gauge_potential(s, g)
        assert abs(g.grid.integrate(volume_ratio(rho)) - 4 * np.pi) <= 1e-10
        ref = closed_form_rho(s, g)
        diff = rho.values - ref
        assert np.ptp(diff) <= 1e-9


def test_pullback(geom32, rng):
    g = geom32
    phi = small_potentials(g, 1, c2=0.2, seed=5)[0]
    same = pullback_potential(AutomorphismElement.identity(), phi)
    assert_allclose(same.coeffs, phi.coeffs, atol=1e-13)
    s = random_sigma(rng, 0.3)
    assert_allclose(pullback_potential(s, g.zero()).coeffs, gauge_potential(s, g).coeffs, atol=1e-13)
    moved = pullback_potential(s, phi)
    assert abs(k_energy_explicit(moved) - k_energy_explicit(phi)) <= 1e-8
    # (s1 s2)^* = s2^* s1^*
    s1, s2 = random_sigma(rng, 0.2), random_sigma(rng, 0.2)
    lhs = pullback_potential(s1 @ s2, phi)
    rhs = pullback_potential(s2, pullback_potential(s1, phi))
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-9


def test_geometry_mismatch(geom24, geom32):
    with pytest.raises(GeometryMismatch):
        geom24.zero() + geom32.zero()


def test_theta_normalization_and_structure(geom24, rng):
    g = geom24
    assert_allclose(theta_of(HolomorphicField.zero(), g).values, 0, atol=1e-14)
    mats = [E for E in sl2_basis()]
    mats.append(sum(c * E for c, E in zip(rng.normal(size=6), sl2_basis())))
    for A in mats:
        th = theta_of(HolomorphicField(A), g).values
        z = g.grid.integrate(np.exp(th).real) + 1j * g.grid.integrate(np.exp(th).imag)
        assert abs(z - 4 * np.pi) <= 1e-8
        # holomorphy potentials of CP^1 are degree-1 harmonics plus a constant
        for part in (th.real, th.imag):
            A_ = g.grid.analyze(part)
            assert np.max(np.abs(A_[2:])) <= 1e-12


def test_theta_matches_pullback_derivative(geom24):
    g = geom24
    B = sl2_basis()
    for k in range(3):
        X = HolomorphicField(B[k])
        h = 1e-5
        fd = (gauge_potential(X.flow(h), g).values - gauge_potential(X.flow(-h), g).values) / (2 * h)
        th = theta_of(X, g).real.values
        assert np.ptp(th - fd) <= 1e-8
        # rotation generators i A: i theta_A up to the complex normalizing constant
        rot = theta_of(HolomorphicField(B[k + 3]), g)
        assert np.ptp(rot.real.values) <= 1e-12
        assert np.ptp(rot.imag.values - th) <= 1e-12


def test_spectrum_reference_and_gauge(geom32, rng):
    g = geom32
    vals = spectrum(g.zero(), 9)
    assert_allclose(vals, [0, 1, 1, 1, 3, 3, 3, 3, 3], atol=1e-10)
    for size in np.linspace(0.05, 0.5, 20):
        rho = gauge_potential(random_sigma(rng, size), g)
        assert_allclose(spectrum(rho, 9), vals, atol=1e-8)


def test_norms(geom24):
    g = geom24
    assert norms(g.zero()) == {"C0": 0.0, "C2proxy": 0.0, "W12": 0.0}
    n = norms(g.constant(-0.7))
    assert_allclose([n["C0"], n["C2proxy"], n["W12"]], [0.7, 0.7, 0.7 * np.sqrt(4 * np.pi)], rtol=1e-12)
    phi = small_potentials(g, 1, c2=0.2, seed=6)[0]
    fine = CP1Geometry(24, nlat=60, nlon=120).field(phi.coeffs)
    th, ph = np.meshgrid(np.linspace(0, np.pi, 400), np.linspace(0, 2 * np.pi, 800), indexing="ij")
    dense = g.grid.evaluate(phi.coeffs, th, ph)
    # the grid maximum is a lower bound and converges to the dense maximum
    assert norms(phi)["C0"] <= np.max(np.abs(dense)) + 1e-12
    assert abs(norms(fine)["C0"] - np.max(np.abs(dense))) <= 1e-3
    ft, fp = fine.geometry.grid.gradient(phi.coeffs)
    w12 = np.sqrt(fine.geometry.grid.integrate(fine.values ** 2 + ft ** 2 + fp ** 2))
    assert_allclose(norms(phi)["W12"], w12, rtol=1e-10)

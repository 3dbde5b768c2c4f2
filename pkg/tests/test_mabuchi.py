import numpy as np
import pytest
from numpy.testing import assert_allclose

from krflab.cp1 import AutomorphismElement, GeometryMismatch, gauge_potential, norms, sl2_basis
from krflab.functionals import PathOfPotentials
from krflab.mabuchi import (
    TangentVector,
    _fd_gradient_full,
    brute_force_psi,
    connection_gamma,
    degree_one_basis,
    distance_upper_bound,
    geodesic_residual,
    hessian_psi,
    leapfrog_geodesic,
    mabuchi_curvature,
    path_length,
    poisson_bracket,
    project_IJ,
    psi_value,
    sectional_curvature,
)

from conftest import small_potentials


def tangent(phi, f):
    return TangentVector(phi, f)


def test_path_length_constants(geom24):
    g = geom24
    path = PathOfPotentials.from_function(lambda s: g.constant(-0.8 * s), 8, lambda s: g.constant(-0.8))
    assert_allclose(path_length(path), 0.8 * np.sqrt(4 * np.pi), rtol=1e-12)
    still = PathOfPotentials.from_function(lambda s: g.zero(), 8, lambda s: g.zero())
    assert path_length(still) == 0.0


def test_distance_upper_bound(geom24):
    g = geom24
    assert distance_upper_bound(g.zero()) == 0.0
    phi = small_potentials(g, 1, c2=0.3, seed=31)[0]
    # refinement oracle: many more path samples
    assert abs(distance_upper_bound(phi, K=64) - distance_upper_bound(phi, K=256)) <= 1e-6
    ratios = [distance_upper_bound(phi * eps) / eps for eps in (1e-1, 1e-2, 1e-3)]
    assert abs(ratios[2] - ratios[1]) < abs(ratios[1] - ratios[0]) / 5
    # linear in C2proxy on a small corpus
    consts = [distance_upper_bound(p) / norms(p)["C2proxy"]
              for p in small_potentials(g, 6, c2=0.1, seed=32)]
    assert max(consts) < 5.0


def test_connection(geom24):
    g = geom24
    phi, a, b = small_potentials(g, 3, c2=0.3, seed=33)
    A, B = tangent(phi, a), tangent(phi, b)
    assert np.max(np.abs(connection_gamma(phi, tangent(phi, g.constant(2.0)), B).f.values)) <= 1e-12
    assert_allclose(connection_gamma(phi, A, B).f.values, connection_gamma(phi, B, A).f.values, atol=1e-12)
    with pytest.raises(GeometryMismatch):
        connection_gamma(phi, A, tangent(phi.shift(0.1), b))


def test_metric_compatibility(geom24):
    # d/dt <a, b>_{phi_t} = <Gamma(a, phi'), b> + <a, Gamma(b, phi')> for fixed a, b
    g = geom24
    phi, a, b = small_potentials(g, 3, c2=0.3, seed=34)
    t0 = 0.5
    errs = []
    for h in (1e-2, 5e-3):
        ip = lambda t: tangent(phi * t, a).inner(tangent(phi * t, b))
        fd = (ip(t0 + h) - ip(t0 - h)) / (2 * h)
        base = phi * t0
        vel = tangent(base, phi)
        A, B = tangent(base, a), tangent(base, b)
        exact = connection_gamma(base, A, vel).inner(B) + A.inner(connection_gamma(base, B, vel))
        errs.append(abs(fd - exact))
    assert errs[1] < errs[0] / 3.5 or errs[1] < 1e-12


def test_curvature_identities(geom24, rng):
    g = geom24
    phi = small_potentials(g, 1, c2=0.3, seed=35)[0]
    fs = [tangent(phi, f) for f in small_potentials(g, 3, c2=0.5, seed=36)]
    c = tangent(phi, g.constant(1.0))
    assert np.max(np.abs(mabuchi_curvature(phi, fs[0], fs[0], fs[1]).f.values)) <= 1e-12
    assert np.max(np.abs(mabuchi_curvature(phi, c, fs[0], fs[1]).f.values)) <= 1e-12
    R12 = mabuchi_curvature(phi, fs[0], fs[1], fs[2]).f.values
    R21 = mabuchi_curvature(phi, fs[1], fs[0], fs[2]).f.values
    assert np.max(np.abs(R12 + R21)) <= 1e-12
    assert_allclose(poisson_bracket(phi, fs[0].f, fs[1].f).values,
                    -poisson_bracket(phi, fs[1].f, fs[0].f).values, atol=1e-12)


def test_sectional_curvature_nonpositive(geom24):
    g = geom24
    phi = small_potentials(g, 1, c2=0.3, seed=37)[0]
    pots = small_potentials(g, 20, c2=0.5, seed=38)
    for k in range(10):
        K = sectional_curvature(phi, tangent(phi, pots[2 * k]), tangent(phi, pots[2 * k + 1]))
        assert K <= 1e-12


def test_geodesic_residual(geom24):
    g = geom24
    const = PathOfPotentials.from_function(lambda s: g.constant(0.4 * s), 8)
    assert geodesic_residual(const) <= 1e-12
    phi = small_potentials(g, 1, c2=0.3, seed=39)[0]
    assert geodesic_residual(PathOfPotentials.straight(phi, K=16)) > 1e-3
    with pytest.raises(ValueError):
        geodesic_residual(PathOfPotentials.straight(phi, K=2))
    res = [geodesic_residual(leapfrog_geodesic(g.zero(), phi, n)) for n in (16, 32, 64)]
    assert 3.2 < res[0] / res[1] < 4.8 and 3.2 < res[1] / res[2] < 4.8


def test_hessian_psi(geom24):
    g = geom24
    u, v = small_potentials(g, 2, c2=0.3, seed=40)
    z = g.zero()
    assert_allclose(hessian_psi(z, tangent(z, u), tangent(z, u)), g.grid.integrate(u.values ** 2) / g.V, rtol=1e-13)
    rho = gauge_potential(AutomorphismElement.exp(0.2 * sl2_basis()[0]), g)
    U, W = tangent(rho, rho.geometry.field(u.coeffs)), tangent(rho, v)
    assert abs(hessian_psi(rho, U, W) - hessian_psi(rho, W, U)) <= 1e-12


def test_gauge_identity(geom24):
    res = project_IJ(geom24.zero())
    assert res.psi <= 1e-14
    assert res.sigma.metric_distance(AutomorphismElement.identity()) <= 1e-8
    assert not res.flagged


def test_gauge_round_trip(geom32, rng):
    g = geom32
    B = sl2_basis()
    for _ in range(2):
        H = sum(c * E for c, E in zip(rng.normal(size=3), B[:3]))
        H *= 0.2 / np.linalg.norm(H)
        K = sum(c * E for c, E in zip(rng.normal(size=3), B[3:])) * 0.3
        s0 = AutomorphismElement.exp(H + K)
        res = project_IJ(gauge_potential(s0, g))
        assert res.psi <= 1e-10
        assert res.sigma.metric_distance(s0) <= 1e-6


def test_gauge_generic_small(geom24):
    g = geom24
    phi = small_potentials(g, 1, c2=0.08, seed=41)[0]
    res = project_IJ(phi)
    assert not res.flagged, res.messages
    assert res.grad_norm <= 1e-10
    assert res.stationarity <= 1e-8
    assert res.hessian_min_eig > 0
    assert np.linalg.norm(_fd_gradient_full(phi, res.sigma)) <= 1e-8
    assert psi_value(phi, AutomorphismElement.identity()) >= res.psi
    assert len(degree_one_basis(res.rho)) == 3
    brute, _ = brute_force_psi(phi, radius=0.5, n=9, refine=6)
    assert abs(brute - res.psi) <= 1e-6
    d = res.to_dict()
    assert d["flagged"] is False and len(d["params"]) == 3


def test_gauge_flags_large_data(geom24):
    phi = small_potentials(geom24, 1, c2=0.6, seed=42)[0]
    res = project_IJ(phi, eps1=0.25)
    assert res.flagged
    assert any("eps1" in m for m in res.messages)

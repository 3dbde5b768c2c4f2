"""
Scalar functionals on the space of potentials of CP^1.

Every functional takes a :class:`~krflab.cp1.PotentialField` and reduces to
quadrature on the geometry grid or to sums over harmonic coefficients.  For
n = 1 the normalization functional is

    I(phi) = (1/V) int phi (1 + Delta phi / 2) omega,

and the explicit K-energy is

    nu(phi) = (1/V) int r log r omega + S_bar I(phi) - (1/V) int phi omega,

with ``r = 1 + Delta phi`` and ``Ric(omega) = omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cp1 import ricci_potential, scalar_curvature, volume_ratio

__all__ = [
    "PathTooCoarse",
    "PathOfPotentials",
    "FunctionalReport",
    "normalization_I",
    "normalize_to_H0",
    "aubin_I",
    "aubin_J",
    "k_energy_explicit",
    "k_energy_path",
    "a_normalization",
    "futaki_invariant",
    "modified_futaki",
    "modified_k_energy",
    "evaluate_W",
    "normalize_W_density",
    "report",
]


class PathTooCoarse(ValueError):
    """Step-halving estimates of a path integral disagree beyond tolerance."""


@dataclass
class PathOfPotentials:
    """
    Samples ``(t_k, phi_k)`` of a path with ``t_0 = 0`` and ``t_K = 1``.

    ``velocities`` may hold exact time derivatives; otherwise they are
    obtained by second-order finite differences of the samples.
    """

    times: np.ndarray
    potentials: list
    velocities: list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.potentials) or len(self.times) < 2:
            raise ValueError("need at least two samples with matching times")
        if abs(self.times[0]) > 1e-14 or abs(self.times[-1] - 1.0) > 1e-14:
            raise ValueError("path must run over [0, 1]")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase")
        for phi in self.potentials:
            phi.require_admissible()

    @classmethod
    def from_function(cls, f, K, df=None):
        t = np.linspace(0.0, 1.0, K + 1)
        pots = [f(s) for s in t]
        vel = [df(s) for s in t] if df is not None else None
        return cls(t, pots, vel)

    @classmethod
    def straight(cls, phi, K=64, start=None):
        """Segment ``t -> start + t (phi - start)``."""
        start = phi.geometry.zero() if start is None else start
        step = phi - start
        return cls.from_function(lambda s: start + step * s, K, lambda s: step)

    def __len__(self):
        return len(self.times)

    def velocity_coeffs(self):
        if self.velocities is not None:
            return np.array([v.coeffs for v in self.velocities])
        A = np.array([p.coeffs for p in self.potentials])
        return np.gradient(A, self.times, axis=0, edge_order=2)

    def subsample(self, step):
        idx = np.arange(0, len(self.times), step)
        if idx[-1] != len(self.times) - 1:
            raise ValueError("subsampling must keep the endpoint")
        vel = None if self.velocities is None else [self.velocities[i] for i in idx]
        return PathOfPotentials(self.times[idx], [self.potentials[i] for i in idx], vel)


@dataclass
class FunctionalReport:
    values: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {"values": dict(self.values), "metadata": dict(self.metadata)}


def normalization_I(phi):
    g = phi.geometry
    A = phi.coeffs
    return (g.inner(A, g.constant(1.0).coeffs) + 0.5 * g.inner(A, phi.laplacian_coeffs)) / g.V


def normalize_to_H0(phi, tol=1e-12, max_iter=50):
    """
    Shift ``phi`` by a constant so that ``I(phi) = 0``.

    Newton iteration on the additive constant; for n = 1 ``I`` is affine in
    the shift with unit slope, so one step is exact up to roundoff.
    """
    out = phi
    for _ in range(max_iter):
        val = normalization_I(out)
        if abs(val) <= tol:
            return out
        out = out.shift(-val)
    if abs(normalization_I(out)) <= 1e-10:
        return out
    raise RuntimeError("I-normalization did not converge in 50 steps")


def aubin_I(phi):
    """``(1/V) int phi (omega - omega_phi)``, computed from coefficients."""
    g = phi.geometry
    phi.require_admissible()
    return -g.inner(phi.coeffs, phi.laplacian_coeffs) / g.V


def aubin_J(phi):
    """``(1/V) (1/2) int i d phi ^ dbar phi``, computed from grid gradients."""
    g = phi.geometry
    phi.require_admissible()
    ft, fp = g.grid.gradient(phi.coeffs)
    # i d phi ^ dbar phi = |d phi|^2_Kahler omega = (1/2)|grad phi|^2 omega
    return 0.5 * g.grid.integrate(0.5 * (ft ** 2 + fp ** 2)) / g.V


def k_energy_explicit(phi):
    g = phi.geometry
    r = volume_ratio(phi)
    entropy = g.grid.integrate(r * np.log(r)) / g.V
    return entropy + g.S_bar * normalization_I(phi) - phi.mean()


def _richardson(values, times, tol, what):
    """Trapezoid on all samples and on every other one, then extrapolate."""
    fine = np.trapezoid(values, times)
    if (len(times) - 1) % 2 != 0 or len(times) < 5:
        return fine
    coarse = np.trapezoid(values[::2], times[::2])
    extrap = (4.0 * fine - coarse) / 3.0
    if abs(extrap - fine) > tol:
        raise PathTooCoarse(
            f"{what}: step-halving disagreement {abs(extrap - fine):.3e} exceeds {tol:.1e}; refine the path")
    return extrap


def _k_energy_integrand(phi, vel_coeffs):
    g = phi.geometry
    S = scalar_curvature(phi)
    r = volume_ratio(phi)
    dot = g.grid.synthesize(vel_coeffs)
    return -g.grid.integrate(dot * (S - g.S_bar) * r) / g.V


def k_energy_path(path, tol=1e-6):
    """K-energy as the path integral of ``-(1/V) int phidot (S - S_bar) omega_phi``."""
    vel = path.velocity_coeffs()
    vals = np.array([_k_energy_integrand(p, v) for p, v in zip(path.potentials, vel)])
    return _richardson(vals, path.times, tol, "k_energy_path")


def a_normalization(phi):
    g = phi.geometry
    r = volume_ratio(phi)
    return -g.grid.integrate((np.log(r) + phi.values) * r) / g.V


def futaki_invariant(Y, phi):
    """``int Y(h_phi) omega_phi`` with ``h_phi`` the Ricci potential (complex)."""
    if np.allclose(Y.matrix, 0.0):
        return 0j
    h = ricci_potential(phi)
    r = volume_ratio(phi)
    vals = Y.derivative(h) * r
    g = phi.geometry
    return complex(g.grid.integrate(vals.real), g.grid.integrate(vals.imag))


def _theta_of_phi(X, phi):
    """Complex ``theta_X(phi) = theta_X + X(phi)`` on the grid."""
    if X is None or np.allclose(X.matrix, 0.0):
        return np.zeros(phi.geometry.grid.shape, dtype=complex)
    return X.theta(phi.geometry).values + X.derivative(phi)


def modified_futaki(X, Y, phi, phidot):
    """``F_X(Y) = -int Y(phidot) e^{theta_X(phi)} omega_phi`` (complex)."""
    if np.allclose(Y.matrix, 0.0):
        return 0j
    g = phi.geometry
    r = volume_ratio(phi)
    weight = np.exp(_theta_of_phi(X, phi)) * r
    vals = -Y.derivative(phidot) * weight
    return complex(g.grid.integrate(vals.real), g.grid.integrate(vals.imag))


def _modified_integrand(X, phi, vel_coeffs):
    g = phi.geometry
    r = volume_ratio(phi)
    h = ricci_potential(phi)
    dot = g.grid.synthesize(vel_coeffs)
    if X is None or np.allclose(X.matrix, 0.0):
        # Delta_phi h = S - 1 exactly in this discretization
        return -g.grid.integrate(dot * (h.laplacian_values / r) * r) / g.V
    theta = _theta_of_phi(X, phi).real
    u = h - g.from_values(theta)
    op = u.laplacian_values / r + X.real_derivative(u)
    return -g.grid.integrate(dot * op * np.exp(theta) * r) / g.V


def modified_k_energy(X, path, tol=1e-6):
    """
    Modified K-energy as the path integral of
    ``-(1/V) int phidot (Delta_phi + Re X)(h_phi - theta_X(phi)) e^{theta_X(phi)} omega_phi``.

    With ``X = 0`` this is the K-energy path integral.
    """
    vel = path.velocity_coeffs()
    vals = np.array([_modified_integrand(X, p, v) for p, v in zip(path.potentials, vel)])
    return _richardson(vals, path.times, tol, "modified_k_energy")


def normalize_W_density(phi, f, tau):
    """Shift ``f`` so that ``(4 pi tau)^{-n/2} int e^{-f} omega_phi = 1``."""
    g = phi.geometry
    r = volume_ratio(phi)
    mass = (4 * np.pi * tau) ** (-g.n / 2) * g.grid.integrate(np.exp(-f.values) * r)
    return f.shift(np.log(mass))


def evaluate_W(phi, f, tau, tol=1e-8):
    """
    ``(4 pi tau)^{-n/2} int [tau(|grad f|^2 + S) + f - n] e^{-f} dV`` on
    ``(CP^1, omega_phi)`` with the Riemannian gradient and ``dV = omega_phi``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    g = phi.geometry
    r = volume_ratio(phi)
    pref = (4 * np.pi * tau) ** (-g.n / 2)
    density = np.exp(-f.values) * r
    mass = pref * g.grid.integrate(density)
    if abs(mass - 1.0) > tol:
        raise ValueError(f"W constraint violated: weighted mass {mass:.12g} != 1")
    ft, fp = g.grid.gradient(f.coeffs)
    grad2 = (ft ** 2 + fp ** 2) / r
    S = scalar_curvature(phi)
    return pref * g.grid.integrate((tau * (grad2 + S) + f.values - g.n) * density)


def report(phi, **extra):
    """Evaluate the scalar functionals of ``phi`` into a :class:`FunctionalReport`."""
    vals = {
        "I": normalization_I(phi),
        "AubinI": aubin_I(phi),
        "AubinJ": aubin_J(phi),
        "nu": k_energy_explicit(phi),
        "a": a_normalization(phi),
    }
    vals.update(extra)
    g = phi.geometry
    meta = {"bandlimit": g.L, "quadrature": [g.grid.nlat, g.grid.nlon]}
    return FunctionalReport(vals, meta)

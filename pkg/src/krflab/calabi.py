"""
U(2)-invariant Kähler metrics on the one-point blow-up of CP^2.

A Calabi-ansatz metric ``omega = i d dbar u(s)``, ``s = log(|z1|^2 + |z2|^2)``,
is described by its momentum profile ``phi(tau) = u''(s)`` as a function of
``tau = u'(s)`` on ``[1, 3]``; smoothness of the compactification is
``phi(1) = phi(3) = 0``, ``phi'(1) = 1``, ``phi'(3) = -1``.  With the radial
field ``X`` acting by ``X(f) = lam f'(s)`` the soliton equation reduces to

    phi' + phi / tau + lam phi = 2 - tau.

Evolution is carried out in momentum coordinates on the Legendre dual
``psi(tau) = s tau - u(s)``: write ``psi = psi_sol + w`` with ``w`` smooth on
``[1, 3]``.  Since ``d_t u |_s = -d_t psi |_tau``, the modified potential flow
becomes

    w_t = log(1 + phi_sol w'') + (2 - tau) w' + w - a(t),

with ``a(t)`` the weighted mean of the first three terms; the pushforward of
``omega_phi^2`` is ``8 pi^2 tau d tau`` for every metric in the class, so all
integrals are one-dimensional with a fixed weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

__all__ = [
    "MEASURE_CONSTANT",
    "VOLUME",
    "ChebyshevGrid",
    "MomentumProfile",
    "ReducedPotential",
    "ConvexityLoss",
    "soliton_residual",
    "futaki_radial",
    "solve_soliton",
    "fubini_study_profile",
    "reduced_measure_integral",
    "reduced_theta",
    "reduced_rhs",
    "reduced_mkrf_step",
    "reduced_modified_k_energy",
    "reduced_modified_k_energy_path",
    "reduced_modified_futaki",
    "reduced_moments",
    "zhu_bound_check",
]

A_END, B_END = 1.0, 3.0
MEASURE_CONSTANT = 8.0 * np.pi ** 2
# (2 pi)^2 c_1^2 with c_1^2 = 8
VOLUME = 32.0 * np.pi ** 2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


class ConvexityLoss(ValueError):
    def __init__(self, minimum):
        self.minimum = float(minimum)
        super().__init__(f"profile convexity lost: min(1 + phi_sol w'') = {self.minimum:.6g}")


def _gauss(f, a, b):
    x = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
    return 0.5 * (b - a) * np.sum(_GL_W * f(x))


class ChebyshevGrid:
    """Chebyshev-Gauss-Lobatto collocation on ``[a, b]`` (nodes ascending)."""

    def __init__(self, N=32, a=A_END, b=B_END):
        self.N = int(N)
        self.a, self.b = float(a), float(b)
        j = np.arange(self.N + 1)
        x = np.cos(np.pi * j / self.N)[::-1]
        self.x = x
        self.tau = 0.5 * (self.b - self.a) * x + 0.5 * (self.b + self.a)
        self.D = self._diff(x) * (2.0 / (self.b - self.a))
        self.D2 = self.D @ self.D
        self.weights = self._clenshaw_curtis() * 0.5 * (self.b - self.a)

    def _diff(self, x):
        N = self.N
        c = np.ones(N + 1)
        c[0] = c[-1] = 2.0
        c *= (-1.0) ** np.arange(N + 1)
        X = x[:, None] - x[None, :]
        D = np.outer(c, 1.0 / c) / (X + np.eye(N + 1))
        D -= np.diag(D.sum(axis=1))
        return D

    def _clenshaw_curtis(self):
        N = self.N
        theta = np.pi * np.arange(N + 1) / N
        w = np.zeros(N + 1)
        v = np.ones(N - 1)
        inner = slice(1, N)
        if N % 2 == 0:
            w[0] = w[N] = 1.0 / (N ** 2 - 1)
            for k in range(1, N // 2):
                v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
            v -= np.cos(N * theta[inner]) / (N ** 2 - 1)
        else:
            w[0] = w[N] = 1.0 / N ** 2
            for k in range(1, (N - 1) // 2 + 1):
                v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        w[inner] = 2.0 * v / N
        return w[::-1]

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def coefficients(self, values):
        return C.chebfit(self.x, values, self.N)

    def interpolate(self, values, tau):
        xs = (2.0 * np.asarray(tau) - (self.a + self.b)) / (self.b - self.a)
        return C.chebval(xs, self.coefficients(values))


@dataclass
class MomentumProfile:
    """Momentum profile ``phi(tau)`` on a Chebyshev grid with soliton parameter ``lam``."""

    grid: ChebyshevGrid
    values: np.ndarray
    lam: float = 0.0
    metric_complete: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.tau.shape:
            raise ValueError("profile values do not match the grid")
        if self.metric_complete:
            self.validate()

    @property
    def interval(self):
        return (self.grid.a, self.grid.b)

    @property
    def tau(self):
        return self.grid.tau

    def derivative(self):
        return self.grid.D @ self.values

    def slopes(self):
        d = self.derivative()
        return float(d[0]), float(d[-1])

    def validate(self):
        v = self.values
        if np.any(v[1:-1] <= 0):
            raise ValueError("profile must be positive on the open interval")
        if abs(v[0]) > 1e-10 or abs(v[-1]) > 1e-10:
            raise ValueError(f"profile endpoints not zero: {v[0]:.3e}, {v[-1]:.3e}")
        sa, sb = self.slopes()
        if abs(sa - 1.0) > 1e-8 or abs(sb + 1.0) > 1e-8:
            raise ValueError(f"boundary slopes {sa:.12g}, {sb:.12g} are not (1, -1)")

    def __call__(self, tau):
        return self.grid.interpolate(self.values, tau)


def soliton_residual(profile):
    """``R = phi' + phi / tau + lam phi - (2 - tau)`` on the profile grid."""
    if profile.grid.a <= 0.0:
        raise ValueError("interval must exclude tau = 0 (a > 0 required)")
    tau = profile.tau
    phi = profile.values
    return profile.derivative() + phi / tau + profile.lam * phi - (2.0 - tau)


def futaki_radial(lam):
    """``F(lam) = int_1^3 (2t - t^2) e^{lam t} dt`` (64-point Gauss-Legendre)."""
    return _gauss(lambda t: (2 * t - t * t) * np.exp(lam * t), A_END, B_END)


def soliton_profile_values(lam, tau):
    """``phi_lam(tau) = (tau e^{lam tau})^{-1} int_1^tau (2 - t) t e^{lam t} dt``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.empty_like(tau)
    for i, s in enumerate(tau):
        if s == A_END:
            out[i] = 0.0
            continue
        integral = _gauss(lambda t: (2 - t) * t * np.exp(lam * t), A_END, s)
        out[i] = integral / (s * np.exp(lam * s))
    return out


def solve_soliton(N=48, bracket=(-5.0, 5.0)):
    """
    Koiso-Cao soliton profile on the blow-up.

    The soliton parameter is the root of ``futaki_radial`` in ``bracket``;
    the profile then follows from the first-order linear ODE with
    ``phi(1) = 0``.
    """
    lo, hi = bracket
    flo, fhi = futaki_radial(lo), futaki_radial(hi)
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"soliton parameter not bracketed in [{lo}, {hi}]")
    lam = brentq(futaki_radial, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    grid = ChebyshevGrid(N)
    vals = soliton_profile_values(lam, grid.tau)
    vals[0] = 0.0
    vals[-1] = 0.0
    return MomentumProfile(grid, vals, lam=lam, metric_complete=True)


def fubini_study_profile(N=32, a=0.5):
    """``tau (3 - tau) / 3`` on ``[a, 3]``: the CP^2 Fubini-Study profile (lam = 0)."""
    grid = ChebyshevGrid(N, a, 3.0)
    t = grid.tau
    return MomentumProfile(grid, t * (3.0 - t) / 3.0, lam=0.0)


def reduced_measure_integral(f, grid=None):
    """
    ``c int_1^3 f(tau) tau d tau`` with ``c = 8 pi^2`` (total volume ``32 pi^2``).

    ``f`` is a callable, or grid values on ``grid``.
    """
    if callable(f):
        return MEASURE_CONSTANT * _gauss(lambda t: f(t) * t, A_END, B_END)
    return MEASURE_CONSTANT * grid.integrate(np.asarray(f) * grid.tau)


def _weighted_mean(grid, values):
    # (1/V) int f omega_phi^2 = (1/4) int f tau d tau
    return grid.integrate(values * grid.tau) / 4.0


def _theta_constant(lam):
    return np.log(4.0 / _gauss(lambda t: t * np.exp(lam * t), A_END, B_END))


def reduced_theta(lam, state=None, grid=None):
    """``theta_X(phi) = lam tau + k`` with ``int e^theta omega_phi^2 = V``."""
    g = state.grid if state is not None else grid
    return lam * g.tau + _theta_constant(lam)


@dataclass
class ReducedPotential:
    """
    Difference ``w = psi - psi_sol`` of symplectic potentials on the
    Chebyshev grid, relative to the soliton profile ``reference``.

    The Kähler potential difference ``v(s) = u(s) - u_sol(s)`` is available
    through :meth:`to_s_grid`.
    """

    reference: MomentumProfile
    w: np.ndarray
    _psi_sol: object = field(default=None, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)

    @property
    def grid(self):
        return self.reference.grid

    @property
    def lam(self):
        return self.reference.lam

    def second_derivative(self):
        return self.grid.D2 @ self.w

    def convexity(self):
        """``psi'' / psi_sol'' = 1 + phi_sol w''`` on the grid."""
        return 1.0 + self.reference.values * self.second_derivative()

    def profile(self):
        """Momentum profile ``1 / psi''`` of the current metric."""
        return MomentumProfile(self.grid, self.reference.values / self.convexity(), lam=self.lam)

    def normalized(self):
        return ReducedPotential(self.reference, self.w - _weighted_mean(self.grid, self.w),
                                self._psi_sol)

    def normalization_I(self):
        # dI = (1/V) int dphi omega_phi^2 = -(1/4) int dpsi tau dtau
        return -_weighted_mean(self.grid, self.w)

    def with_w(self, w):
        return ReducedPotential(self.reference, w, self._psi_sol)

    # -- Legendre maps
    def _soliton_dual(self):
        if self._psi_sol is None:
            self._psi_sol = _SolitonDual(self.reference)
        return self._psi_sol

    def s_of_tau(self, tau):
        d = self._soliton_dual()
        dw = self.grid.interpolate(self.grid.D @ self.w, tau)
        return d.dpsi(tau) + dw

    def tau_of_s(self, s):
        """Invert ``s = psi'(tau)`` for the current metric."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        eps = 1e-15
        out = np.empty_like(s)
        for i, si in enumerate(s):
            out[i] = brentq(lambda t: self.s_of_tau(t) - si, A_END + eps, B_END - eps,
                            xtol=1e-15, maxiter=200)
        return out

    def to_s_grid(self, s=None):
        """``v(s) = u(s) - u_sol(s)`` on a uniform grid (default ``|s| <= 12``)."""
        s = np.linspace(-12.0, 12.0, 241) if s is None else np.asarray(s, dtype=float)
        d = self._soliton_dual()
        tau = self.tau_of_s(s)
        tau_sol = d.tau_of_s(s)
        psi = d.psi(tau) + self.grid.interpolate(self.w, tau)
        psi_sol = d.psi(tau_sol)
        return s, s * (tau - tau_sol) - (psi - psi_sol)

    def endpoint_decay(self, radius=12.0):
        """Distance of ``v(+-radius)`` from its limits ``-w(1)``, ``-w(3)``."""
        _, v = self.to_s_grid(np.array([-radius, radius]))
        return max(abs(v[0] + self.w[0]), abs(v[1] + self.w[-1]))


class _SolitonDual:
    """
    Legendre dual of the soliton: ``psi_sol'(tau) = log((tau-1)/(3-tau)) + G1``
    with ``G1`` smooth, normalized by ``psi_sol'(2) = 0``.
    """

    def __init__(self, profile, M=96):
        lam = profile.lam
        j = np.arange(M)
        x = np.cos(np.pi * (j + 0.5) / M)
        t = 2.0 + x
        phi = soliton_profile_values(lam, t)
        g = 1.0 / phi - 1.0 / (t - 1.0) - 1.0 / (3.0 - t)
        c = C.chebfit(x, g, M - 1)
        g1 = C.chebint(c)
        g1[0] -= C.chebval(0.0, g1)
        self._g1 = g1
        g2 = C.chebint(g1)
        g2[0] -= C.chebval(0.0, g2)
        self._g2 = g2

    def dpsi(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.log((tau - 1.0) / (3.0 - tau)) + C.chebval(tau - 2.0, self._g1)

    def psi(self, tau):
        tau = np.asarray(tau, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(tau > 1.0, (tau - 1.0) * np.log(np.maximum(tau - 1.0, 1e-300)), 0.0)
            b = np.where(tau < 3.0, (3.0 - tau) * np.log(np.maximum(3.0 - tau, 1e-300)), 0.0)
        return a + b + C.chebval(tau - 2.0, self._g2)

    def tau_of_s(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        eps = 1e-15
        return np.array([brentq(lambda t: self.dpsi(t) - si, A_END + eps, B_END - eps,
                                xtol=1e-15, maxiter=200) for si in s])


def reduced_rhs(state, delta_pos=0.0):
    """Return ``(w_t, a)`` for the reduced modified flow."""
    g = state.grid
    conv = state.convexity()
    if np.min(conv) <= delta_pos:
        raise ConvexityLoss(np.min(conv))
    F = np.log(conv) + (2.0 - g.tau) * (g.D @ state.w) + state.w
    a = _weighted_mean(g, F)
    return F - a, a


def stability_bound(reference):
    """Largest stable rk4 step for the linearized reduced operator."""
    g = reference.grid
    J = reference.values[:, None] * g.D2 + (2.0 - g.tau)[:, None] * g.D + np.eye(g.N + 1)
    rad = np.max(np.abs(np.linalg.eigvals(J)))
    return 2.5 / rad


def reduced_mkrf_step(state, dt, delta_pos=1e-6, max_halvings=8):
    """
    One rk4 step of the reduced modified flow.

    Returns ``(new_state, a_increment)`` where ``a_increment`` is the rk4
    quadrature of ``a(t)`` over the step.  Convexity loss halves the step
    up to ``max_halvings`` times.
    """
    try:
        return _rk4_reduced(state, dt, delta_pos)
    except ConvexityLoss:
        if max_halvings <= 0:
            raise
        half, ai1 = reduced_mkrf_step(state, dt / 2, delta_pos, max_halvings - 1)
        out, ai2 = reduced_mkrf_step(half, dt / 2, delta_pos, max_halvings - 1)
        return out, ai1 + ai2


def _rk4_reduced(state, dt, delta_pos):
    w = state.w
    k1, a1 = reduced_rhs(state, delta_pos)
    k2, a2 = reduced_rhs(state.with_w(w + 0.5 * dt * k1), delta_pos)
    k3, a3 = reduced_rhs(state.with_w(w + 0.5 * dt * k2), delta_pos)
    k4, a4 = reduced_rhs(state.with_w(w + dt * k3), delta_pos)
    new = state.with_w(w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    if np.min(new.convexity()) <= delta_pos:
        raise ConvexityLoss(np.min(new.convexity()))
    return new, dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)


def _linear_term_weight(lam, tau):
    # d/dtau [(2 - tau) tau e^{lam tau}]
    return ((2.0 - 2.0 * tau) + lam * (2.0 * tau - tau * tau)) * np.exp(lam * tau)


def reduced_modified_k_energy(state):
    """
    Closed form of the modified K-energy relative to the soliton:

        mu = K [ -int log(1 + phi_sol w'') tau e^{lam tau} d tau + L(w) ],
        L(w) = 3 e^{3 lam} w(3) + e^{lam} w(1) + int w ((2 - tau) tau e^{lam tau})' d tau,

    with ``K = 1 / int tau e^{lam tau} d tau``.  ``L`` vanishes on constants
    and equals ``-F(lam)`` on ``tau``.
    """
    g = state.grid
    lam = state.lam
    W = g.tau * np.exp(lam * g.tau)
    K = 1.0 / _gauss(lambda t: t * np.exp(lam * t), A_END, B_END)
    entropy = -g.integrate(np.log(state.convexity()) * W)
    lin = (3.0 * np.exp(3.0 * lam) * state.w[-1] + np.exp(lam) * state.w[0]
           + g.integrate(state.w * _linear_term_weight(lam, g.tau)))
    return K * (entropy + lin)


def reduced_modified_k_energy_path(states, times=None):
    """
    Path integral ``-(1/V) int int phidot (Delta + X)(h - theta_X(phi)) e^{theta} omega^2``
    in momentum coordinates, ``-K int int wdot (W R)' d tau dt``, where ``R`` is
    the soliton residual of the current profile and ``W = tau e^{lam tau}``.

    ``states`` run from the reference (``w = 0``) to the target.
    """
    n = len(states)
    times = np.linspace(0.0, 1.0, n) if times is None else np.asarray(times, dtype=float)
    g = states[0].grid
    lam = states[0].lam
    W = g.tau * np.exp(lam * g.tau)
    K = 1.0 / _gauss(lambda t: t * np.exp(lam * t), A_END, B_END)
    Wmat = np.array([s.w for s in states])
    wdot = np.gradient(Wmat, times, axis=0, edge_order=2)
    vals = []
    for s, wd in zip(states, wdot):
        prof = s.profile()
        R = soliton_residual(prof)
        vals.append(-K * g.integrate(wd * (g.D @ (W * R))))
    vals = np.array(vals)
    fine = np.trapezoid(vals, times)
    if (n - 1) % 2 == 0 and n >= 5:
        coarse = np.trapezoid(vals[::2], times[::2])
        return (4 * fine - coarse) / 3.0
    return fine


def reduced_modified_futaki(state, wdot):
    """``F_X(X) = -int X(phidot) e^{theta_X(phi)} omega_phi^2`` for the radial field."""
    g = state.grid
    lam = state.lam
    prof = state.profile().values
    theta = reduced_theta(lam, state)
    # X(phidot) = -lam phi d_tau w_t
    return lam * MEASURE_CONSTANT * g.integrate(prof * (g.D @ wdot) * np.exp(theta) * g.tau)


def reduced_moments(state, wdot):
    """``mu0 = (1/V) int phidot^2 omega^2`` and ``mu1 = (1/V) int |d phidot|^2 omega^2``."""
    g = state.grid
    prof = state.profile().values
    mu0 = _weighted_mean(g, wdot ** 2)
    mu1 = _weighted_mean(g, prof * (g.D @ wdot) ** 2)
    return mu0, mu1


def zhu_bound_check(state, s=None):
    """``sup |X(phi)| = sup_s |lam (tau_phi(s) - tau_sol(s))|`` over the s-grid."""
    if state.lam == 0.0:
        return 0.0
    s = np.linspace(-12.0, 12.0, 241) if s is None else np.asarray(s, dtype=float)
    tau = state.tau_of_s(s)
    tau_sol = state._soliton_dual().tau_of_s(s)
    return float(np.max(np.abs(state.lam * (tau - tau_sol))))

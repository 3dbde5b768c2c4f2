"""
Riemannian geometry of the space of normalized potentials and gauge fixing.

The metric on tangent vectors at ``phi`` is ``int f g omega_phi``.  On CP^1
the Poisson bracket of ``omega_phi`` in the orthonormal frame of the round
metric is ``{f, g} = (f_theta g_phi - f_phi g_theta) / r``, and the curvature
operator is ``R(a, b) c = -{{a, b}, c} / 4``.

Gauge fixing minimizes ``Psi(sigma) = (I - J)(omega_phi, sigma^* omega)``
over PSL(2, C).  For n = 1 this is the Dirichlet energy

    Psi = (1 / 2V) sum_l l(l+1)/2 |rho_lm - phi_lm|^2,

which depends on ``sigma`` only through ``sigma^* sigma``; the search is run
over Hermitian generators ``sigma = exp(H)``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .cp1 import (
    AutomorphismElement,
    GeometryMismatch,
    PotentialField,
    gauge_potential,
    norms,
    sl2_basis,
    spectrum,
    volume_ratio,
)
from .functionals import PathOfPotentials, _richardson, normalize_to_H0

__all__ = [
    "TangentVector",
    "GaugeSolveResult",
    "path_length",
    "distance_upper_bound",
    "connection_gamma",
    "poisson_bracket",
    "mabuchi_curvature",
    "sectional_curvature",
    "geodesic_residual",
    "leapfrog_geodesic",
    "psi_value",
    "psi_gradient",
    "project_IJ",
    "hessian_psi",
    "degree_one_basis",
    "brute_force_psi",
]


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector ``f`` at the potential ``base``."""

    base: PotentialField
    f: PotentialField

    def __post_init__(self):
        self.base.geometry.check(self.f)

    @property
    def is_normalized(self):
        return abs(self.base.geometry.grid.integrate(self.f.values * self.base.ratio)) <= 1e-10

    def inner(self, other):
        _same_base(self, other)
        return self.base.geometry.grid.integrate(self.f.values * other.f.values * self.base.ratio)


def _same_base(*vectors):
    base = vectors[0].base
    for v in vectors[1:]:
        if v.base is not base and not np.array_equal(v.base.coeffs, base.coeffs):
            raise GeometryMismatch("tangent vectors live at different base potentials")
    return base


def _path_speeds(path):
    vel = path.velocity_coeffs()
    out = []
    for phi, A in zip(path.potentials, vel):
        g = phi.geometry
        v = g.grid.synthesize(A)
        out.append(np.sqrt(max(g.grid.integrate(v * v * volume_ratio(phi)), 0.0)))
    return np.array(out)


def path_length(path, tol=1e-6):
    """``int_0^1 (int phi'^2 omega_phi)^{1/2} dt`` with a step-halving check."""
    return _richardson(_path_speeds(path), path.times, tol, "path_length")


def _gamma_path(phi, K):
    g = phi.geometry

    def pot(t):
        return normalize_to_H0(phi * t)

    def vel(t):
        # d/dt I(t phi) = (1/V) int phi omega_{t phi}
        p = phi * t
        return phi.shift(-g.grid.integrate(phi.values * p.ratio) / g.V)

    return PathOfPotentials.from_function(pot, K, vel)


def distance_upper_bound(phi, K=64, tol=1e-6):
    """Length of ``gamma_t = t phi - I(t phi)``; bounds the distance from 0 to ``phi``."""
    phi.require_admissible()
    return path_length(_gamma_path(phi, K), tol)


def _frame_gradient(f):
    return f.geometry.grid.gradient(f.coeffs)


def connection_gamma(phi, psi1, psi2):
    """``Gamma(psi1, psi2) = -<grad psi1, grad psi2>_{g_phi} / 2`` (Riemannian gradient)."""
    _same_base(psi1, psi2)
    r = volume_ratio(phi)
    a_t, a_p = _frame_gradient(psi1.f)
    b_t, b_p = _frame_gradient(psi2.f)
    vals = -0.5 * (a_t * b_t + a_p * b_p) / r
    return TangentVector(phi, phi.geometry.from_values(vals))


def _bracket_values(phi, f, g):
    r = volume_ratio(phi)
    f_t, f_p = _frame_gradient(f)
    g_t, g_p = _frame_gradient(g)
    return (f_t * g_p - f_p * g_t) / r


def poisson_bracket(phi, f, g):
    """Poisson bracket of ``omega_phi`` projected to the bandlimit."""
    return phi.geometry.from_values(_bracket_values(phi, f, g))


def mabuchi_curvature(phi, d1, d2, d3):
    """``R_phi(d1, d2) d3 = -{{d1, d2}, d3} / 4``."""
    _same_base(d1, d2, d3)
    inner = poisson_bracket(phi, d1.f, d2.f)
    return TangentVector(phi, poisson_bracket(phi, inner, d3.f) * -0.25)


def sectional_curvature(phi, d1, d2):
    """
    ``<R(d1, d2) d1, d2> / (|d1|^2 |d2|^2 - <d1, d2>^2)``.

    With this ordering the value is ``-|{d1, d2}|^2 / 4`` over the area term
    and hence nonpositive.
    """
    R = mabuchi_curvature(phi, d1, d2, d1)
    num = R.inner(d2)
    den = d1.inner(d1) * d2.inner(d2) - d1.inner(d2) ** 2
    if den <= 0:
        raise ValueError("tangent vectors are linearly dependent")
    return num / den


def geodesic_residual(path):
    """
    Max-norm of ``phi'' - |grad phi'|^2_{phi} / 2`` by centered differences.

    The quadratic term is projected to the bandlimit before comparison, so
    the residual measures time discretization only.  Requires equally
    spaced samples.
    """
    n = len(path)
    if n < 5:
        raise ValueError("geodesic residual needs at least 5 samples")
    h = np.diff(path.times)
    if np.max(np.abs(h - h[0])) > 1e-12:
        raise ValueError("geodesic residual needs equally spaced samples")
    h = h[0]
    pots = path.potentials
    worst = 0.0
    for k in range(1, n - 1):
        g = pots[k].geometry
        acc = (pots[k + 1].coeffs - 2 * pots[k].coeffs + pots[k - 1].coeffs) / h ** 2
        vel = (pots[k + 1].coeffs - pots[k - 1].coeffs) / (2 * h)
        res = g.grid.synthesize(acc - _geodesic_force(pots[k], vel))
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def _geodesic_force(phi, v):
    g = phi.geometry
    v_t, v_p = g.grid.gradient(v)
    return g.grid.analyze(0.5 * (v_t ** 2 + v_p ** 2) / volume_ratio(phi))


def leapfrog_geodesic(phi0, v0, nsteps):
    """
    Initial-value geodesic on ``[0, 1]`` by Stormer-Verlet.

    ``phi0`` is a potential and ``v0`` its initial velocity (a field).
    """
    h = 1.0 / nsteps
    g = phi0.geometry
    phi = phi0.coeffs.copy()
    v = v0.coeffs.copy()
    pots = [phi0]
    vhalf = v + 0.5 * h * _geodesic_force(phi0, v)
    for _ in range(nsteps):
        phi = phi + h * vhalf
        P = PotentialField(g, phi)
        # velocity at the node, then the next half step
        F = _geodesic_force(P, vhalf)
        vnode = vhalf + 0.5 * h * F
        F = _geodesic_force(P, vnode)
        vhalf = vhalf + h * F
        pots.append(P)
    return PathOfPotentials(np.linspace(0.0, 1.0, nsteps + 1), pots)


# -- gauge fixing -----------------------------------------------------------

_BASIS = sl2_basis()
_HERM = _BASIS[:3]


def _sigma_from_params(t):
    t = np.asarray(t, dtype=float)
    basis = _HERM if t.size == 3 else _BASIS
    return AutomorphismElement.exp(sum(tk * E for tk, E in zip(t, basis)))


def _rho_raw(geometry, Q):
    """``2 log(w* Q w)`` for unit ``w``; ``Q = sigma^* sigma``."""
    W = geometry.W
    q = np.einsum("i...,ij,j...->...", W.conj(), Q, W).real
    return 2.0 * np.log(q), q


def psi_value(phi, sigma):
    """``Psi(sigma) = (I - J)(omega_phi, sigma^* omega)``."""
    g = phi.geometry
    M = sigma.matrix
    vals, _ = _rho_raw(g, M.conj().T @ M)
    D = g.grid.analyze(vals) - phi.coeffs
    return float(np.sum(g.eigenvalues * np.abs(D) ** 2)) / (2.0 * g.V)


def _psi_and_grad(phi, t):
    """Psi and its gradient in the Hermitian coordinates ``sigma = exp(H(t))``."""
    g = phi.geometry
    H = sum(tk * E for tk, E in zip(t, _HERM))
    Q, dQ = [], []
    for E in _HERM:
        Qk, dQk = scipy.linalg.expm_frechet(2 * H, 2 * E)
        dQ.append(dQk)
        Q = Qk
    vals, q = _rho_raw(g, Q)
    D = g.grid.analyze(vals) - phi.coeffs
    lam = g.eigenvalues
    psi = float(np.sum(lam * np.abs(D) ** 2)) / (2.0 * g.V)
    W = g.W
    grad = np.empty(3)
    for k in range(3):
        dq = np.einsum("i...,ij,j...->...", W.conj(), dQ[k], W).real
        dR = g.grid.analyze(2.0 * dq / q)
        grad[k] = float(np.sum(lam * (D * dR.conj()).real)) / g.V
    return psi, grad


def psi_gradient(phi, t):
    return _psi_and_grad(phi, np.asarray(t, dtype=float))[1]


def _fd_hessian(phi, t, h=1e-5):
    n = len(t)
    Hm = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        Hm[:, k] = (psi_gradient(phi, t + e) - psi_gradient(phi, t - e)) / (2 * h)
    return 0.5 * (Hm + Hm.T)


def _fd_gradient_full(phi, sigma, h=1e-6):
    """Central-difference gradient of Psi in the six parameters ``sigma exp(sum s_k E_k)``."""
    out = np.empty(6)
    for k, E in enumerate(_BASIS):
        p = psi_value(phi, sigma @ AutomorphismElement.exp(h * E))
        m = psi_value(phi, sigma @ AutomorphismElement.exp(-h * E))
        out[k] = (p - m) / (2 * h)
    return out


def _local_solve(phi, t0, gtol):
    fun = lambda t: _psi_and_grad(phi, t)
    res = minimize(fun, t0, jac=True, method="BFGS", options={"gtol": gtol * 0.1, "maxiter": 500})
    t = res.x
    psi, grad = fun(t)
    # Newton polish: BFGS stalls on the flat tail of tiny Psi values
    for _ in range(8):
        if np.linalg.norm(grad) <= 0.1 * gtol:
            break
        Hm = _fd_hessian(phi, t)
        try:
            step = np.linalg.solve(Hm, grad)
        except np.linalg.LinAlgError:
            break
        t_new = t - step
        psi_new, grad_new = fun(t_new)
        if psi_new > psi + 1e-14 and np.linalg.norm(grad_new) >= np.linalg.norm(grad):
            break
        t, psi, grad = t_new, psi_new, grad_new
    return t, psi, grad, bool(res.success) or np.linalg.norm(grad) <= gtol


def degree_one_basis(rho, tol=1e-6, k=8):
    """Eigenfunctions of ``-Delta_rho`` in the eigenvalue-1 cluster (``int u^2 omega_rho = 1``)."""
    vals, fields = spectrum(rho, k, return_fields=True)
    return [f for v, f in zip(vals, fields) if abs(v - 1.0) <= tol]


def hessian_psi(rho, u, v):
    """``(1/V) int (1 + Delta_rho rho / 2) u v omega_rho``."""
    _same_base(u, v)
    g = rho.geometry
    r = volume_ratio(rho)
    weight = 1.0 + 0.5 * rho.laplacian_values / r
    return g.grid.integrate(weight * u.f.values * v.f.values * r) / g.V


@dataclass
class GaugeSolveResult:
    """Outcome of the I - J minimization."""

    sigma: AutomorphismElement
    rho: PotentialField
    psi: float
    grad_norm: float
    hessian_min_eig: float
    stationarity: float
    params: np.ndarray
    flagged: bool = False
    messages: list = field(default_factory=list)

    def to_dict(self):
        a, b, c, d = self.sigma.entries
        return {
            "sigma": [[z.real, z.imag] for z in (a, b, c, d)],
            "psi": self.psi,
            "grad_norm": self.grad_norm,
            "hessian_min_eig": self.hessian_min_eig,
            "stationarity": self.stationarity,
            "params": [float(x) for x in self.params],
            "flagged": self.flagged,
            "messages": list(self.messages),
        }


def _seeds():
    out = [np.zeros(3)]
    for k in range(3):
        for s in (0.3, -0.3):
            e = np.zeros(3)
            e[k] = s
            out.append(e)
    return out


def project_IJ(phi, eps1=0.25, gtol=1e-10, workers=None):
    """
    Minimize ``Psi`` over PSL(2, C) from seven starts and report the result.

    The starts are reduced in a fixed order; ties within 1e-12 in ``Psi`` go
    to the smallest parameter vector.  A non-positive Hessian, exit gradient
    above ``gtol`` or ``C2proxy(phi) > eps1`` marks the result as flagged.
    """
    phi.require_admissible()
    seeds = _seeds()
    # filters are process-global, so set them here rather than in the workers;
    # line-search stalls near roundoff are handled by the Newton polish
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="The line search algorithm")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda s: _local_solve(phi, s, gtol), seeds))
    best = None
    for t, psi, grad, ok in runs:
        if best is None or psi < best[1] - 1e-12 or (
                abs(psi - best[1]) <= 1e-12 and np.linalg.norm(t) < np.linalg.norm(best[0])):
            best = (t, psi, grad, ok)
    t, psi, grad, ok = best
    sigma = _sigma_from_params(t)
    g = phi.geometry
    rho = gauge_potential(sigma, g)
    messages = []
    flagged = False
    gnorm = float(np.linalg.norm(grad))
    if gnorm > gtol:
        flagged = True
        messages.append(f"exit gradient {gnorm:.3e} above {gtol:.1e}")
    if not ok:
        messages.append("line search did not report success")
    c2 = norms(phi)["C2proxy"]
    if c2 > eps1:
        flagged = True
        messages.append(f"C2proxy {c2:.3g} exceeds eps1 = {eps1:.3g}")
    basis = degree_one_basis(rho)
    diff = (phi - rho).values
    r = volume_ratio(rho)
    stat = max((abs(g.grid.integrate(diff * u.values * r)) / g.V for u in basis), default=np.nan)
    if basis:
        vecs = [TangentVector(rho, u) for u in basis]
        Hm = np.array([[hessian_psi(rho, a, b) for b in vecs] for a in vecs])
        hmin = float(np.linalg.eigvalsh(Hm).min())
    else:
        hmin = np.nan
        messages.append("degree-one eigenspace not found")
    if not hmin > 0:
        flagged = True
        messages.append("Hessian not positive definite on the degree-one eigenspace")
    return GaugeSolveResult(sigma, rho, max(psi, 0.0), gnorm, hmin, float(stat), t, flagged, messages)


def brute_force_psi(phi, radius=1.0, n=21, refine=4):
    """
    Grid search over the Hermitian coordinates with successive zooms.

    Returns ``(Psi_min, t_min)``; independent of the quasi-Newton solver.
    """
    center = np.zeros(3)
    half = radius
    best = (np.inf, center)
    for _ in range(refine + 1):
        axis = np.linspace(-half, half, n)
        for a in axis:
            for b in axis:
                for c in axis:
                    t = center + np.array([a, b, c])
                    val = psi_value(phi, _sigma_from_params(t))
                    if val < best[0]:
                        best = (val, t)
        center = best[1]
        half = 2.0 * half / (n - 1)
    return best

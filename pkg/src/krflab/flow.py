"""
Time integration of the potential flows.

On CP^1 the normalized flow is

    d phi / dt = log(1 + Delta phi) + phi + Re X(phi) + a(t),

with the logarithm projected to the bandlimit and ``a(t)`` fixed at every
stage by ``int phidot omega_phi = 0``, which keeps ``I(phi) = 0`` exactly in
the semi-discrete system.  ``X = None`` gives the plain flow and
``normalized=False`` the flow with ``a = 0``.  The Calabi-ansatz backend uses
the reduced equation from :mod:`krflab.calabi`; the driver
:func:`run_flow` handles both through a small adaptor interface.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import calabi as cb
from .cp1 import (
    AdmissibilityError,
    CP1Geometry,
    HolomorphicField,
    PotentialField,
    norms,
    pullback_potential,
)
from .functionals import a_normalization, k_energy_explicit, normalization_I, normalize_to_H0
from .mabuchi import project_IJ

__all__ = [
    "FlowConfig",
    "FlowState",
    "RunReport",
    "PositivityBreach",
    "stability_bound",
    "flow_rhs",
    "krf_step",
    "mkrf_step",
    "run_flow",
    "conservation_check",
    "mu_moments",
    "rate_fit",
    "weak_class_check",
    "smoothing_probe",
    "random_potential",
    "rough_potential",
    "COLUMNS",
]

COLUMNS = ("t", "nu", "a", "drift", "mu0", "mu1", "c0", "c2proxy", "min_ratio", "gauge_event")


class PositivityBreach(RuntimeError):
    """Volume ratio fell below the floor even after repeated step halving."""

    def __init__(self, minimum, t=None, report=None):
        self.minimum = float(minimum)
        self.t = t
        self.report = report
        super().__init__(f"positivity floor breached (min ratio {self.minimum:.3e})"
                         + ("" if t is None else f" at t={t:.6g}"))


@dataclass
class FlowConfig:
    """
    Parameters of a flow run.

    ``X`` is a 2x2 trace-free matrix (as nested lists of ``[re, im]`` pairs
    or a complex array) on CP^1, and ``true``/``false`` on the Calabi
    backend, where the field strength is the solved soliton parameter.
    """

    backend: str = "cp1"
    bandlimit: int = 32
    integrator: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    eps1: float = 0.25
    recenter: str = "off"
    delta_pos: float = 1e-6
    X: object = None
    output_every: int = 10
    normalized: bool = True
    hysteresis: float = 0.5
    mu_floor: float = 1e-24

    def __post_init__(self):
        if self.backend not in ("cp1", "calabi"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.integrator not in ("rk4", "imex"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.recenter not in ("off", "on"):
            raise ValueError(f"recenter must be 'off' or 'on', got {self.recenter!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.eps1 > 0:
            raise ValueError("eps1 must be positive")
        if not (0 < self.delta_pos <= 1e-4):
            raise ValueError("delta_pos must lie in (0, 1e-4]")
        if int(self.output_every) < 1:
            raise ValueError("output_every must be at least 1")

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.X, np.ndarray):
            d["X"] = [[[float(z.real), float(z.imag)] for z in row] for row in self.X]
        return d

    def holomorphic_field(self):
        if self.X is None or self.X is False:
            return None
        if self.backend == "calabi":
            return True
        M = np.asarray(self.X)
        if M.dtype != complex and M.ndim == 3:
            M = M[..., 0] + 1j * M[..., 1]
        return HolomorphicField(np.asarray(M, dtype=complex))


@dataclass
class FlowState:
    """
    Current potential, time, accumulated ``int a dt`` and gauge factors.

    ``defect`` accumulates the values of ``I`` removed by the per-step
    renormalization; since ``a + nu = -I`` for n = 1, it is the
    conservation error the integrator would show without renormalizing.
    """

    phi: object
    t: float = 0.0
    a_integral: float = 0.0
    gauge: list = field(default_factory=list)
    phidot: object = None
    defect: float = 0.0
    armed: bool = True
    recenter_failed: bool = False


@dataclass
class RunReport:
    rows: list
    theta: dict | None
    termination: str
    gauge: list
    flagged: bool = False
    messages: list = field(default_factory=list)
    final_state: FlowState | None = None
    extras: dict = field(default_factory=dict)

    def column(self, name):
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_dict(self):
        return {
            "columns": list(COLUMNS),
            "samples": len(self.rows),
            "theta": self.theta,
            "termination": self.termination,
            "gauge_events": [{"t": t, "sigma": _sigma_list(s)} for t, s in self.gauge],
            "flagged": self.flagged,
            "messages": list(self.messages),
            "conservation_drift": conservation_check(self) if len(self.rows) >= 2 else 0.0,
            **self.extras,
        }


def _sigma_list(s):
    return [[float(z.real), float(z.imag)] for z in s.entries]


# -- CP^1 backend ------------------------------------------------------------

def stability_bound(geometry):
    """Largest rk4 step for the linear part: ``2.5 / lambda_max(-Delta)``."""
    L = geometry.L
    return 2.5 / (L * (L + 1) / 2.0)


def flow_rhs(phi, X=None, normalized=True, delta_pos=0.0):
    """
    Return ``(phidot, a)`` for the CP^1 flow at ``phi``.

    ``a`` is chosen so that ``int phidot omega_phi = 0``.
    """
    g = phi.geometry
    r = phi.ratio
    rmin = float(np.min(r))
    if not rmin > delta_pos:
        raise AdmissibilityError(rmin)
    F = g.grid.analyze(np.log(r)) + phi.coeffs
    if X is not None:
        F = F + g.grid.analyze(X.real_derivative(phi))
    if normalized:
        Fv = g.grid.synthesize(F)
        a = -g.grid.integrate(Fv * r) / g.V
        F = F.copy()
        F[0, 0] += a * np.sqrt(4 * np.pi)
    else:
        a = 0.0
    return F, a


def _rk4(phi, dt, X, normalized, delta_pos):
    g = phi.geometry
    A = phi.coeffs
    k1, a1 = flow_rhs(phi, X, normalized, delta_pos)
    k2, a2 = flow_rhs(PotentialField(g, A + 0.5 * dt * k1), X, normalized, delta_pos)
    k3, a3 = flow_rhs(PotentialField(g, A + 0.5 * dt * k2), X, normalized, delta_pos)
    k4, a4 = flow_rhs(PotentialField(g, A + dt * k3), X, normalized, delta_pos)
    new = PotentialField(g, A + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    return new, dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)


def _imex(phi, dt, X, normalized, delta_pos):
    # implicit Euler on Delta phi + phi, explicit on the remainder
    g = phi.geometry
    F, a = flow_rhs(phi, X, normalized, delta_pos)
    lin = (1.0 - g.eigenvalues) * phi.coeffs
    explicit = F - lin
    denom = 1.0 - dt * (1.0 - g.eigenvalues)
    new = PotentialField(g, (phi.coeffs + dt * explicit) / denom)
    return new, dt * a


def _step_once(phi, dt, integrator, X, normalized, delta_pos):
    scheme = _rk4 if integrator == "rk4" else _imex
    new, da = scheme(phi, dt, X, normalized, delta_pos)
    if not np.all(np.isfinite(new.coeffs)):
        raise FloatingPointError("non-finite field after step")
    rmin = float(np.min(new.ratio))
    if not rmin > delta_pos:
        raise AdmissibilityError(rmin)
    return new, da


def _advance(phi, dt, integrator, X, normalized, delta_pos, halvings=8):
    try:
        return _step_once(phi, dt, integrator, X, normalized, delta_pos)
    except AdmissibilityError as exc:
        if halvings <= 0:
            raise PositivityBreach(exc.minimum) from exc
        mid, da1 = _advance(phi, dt / 2, integrator, X, normalized, delta_pos, halvings - 1)
        out, da2 = _advance(mid, dt / 2, integrator, X, normalized, delta_pos, halvings - 1)
        return out, da1 + da2


def mkrf_step(state, dt, integrator="rk4", X=None, normalized=True, delta_pos=1e-6,
              enforce_stability=True):
    """
    One step of the modified flow on CP^1; ``X = None`` is the plain flow.

    The result is shifted back to ``I = 0``; with ``normalized=False`` the
    shift is skipped.
    """
    phi = state.phi
    if integrator == "rk4" and enforce_stability and dt > stability_bound(phi.geometry) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the rk4 stability bound "
                         f"{stability_bound(phi.geometry):.3e} at L={phi.geometry.L}")
    new, da = _advance(phi, dt, integrator, X, normalized, delta_pos)
    defect = state.defect
    if normalized:
        # I is affine in shifts with unit slope, so one shift is exact
        val = normalization_I(new)
        new = new.shift(-val)
        defect += val
    return FlowState(new, state.t + dt, state.a_integral + da, list(state.gauge), None, defect,
                     state.armed, state.recenter_failed)


def krf_step(state, dt, integrator="rk4", normalized=True, delta_pos=1e-6, enforce_stability=True):
    """One step of ``d phi / dt = log(omega_phi / omega) + phi + a(t)``."""
    return mkrf_step(state, dt, integrator, None, normalized, delta_pos, enforce_stability)


def mu_moments(state, X=None, normalized=True):
    """
    ``mu0 = (1/V) int phidot^2 omega_phi`` and ``mu1 = (1/V) int |d phidot|^2 omega_phi``.

    On CP^1 the gradient term is conformally invariant and is summed from
    coefficients.  ``phidot`` is recomputed when the state does not carry it.
    """
    phi = state.phi
    if isinstance(phi, cb.ReducedPotential):
        wd = state.phidot if state.phidot is not None else cb.reduced_rhs(phi)[0]
        mu0, mu1 = cb.reduced_moments(phi, wd)
        return {"mu0": float(mu0), "mu1": float(mu1)}
    g = phi.geometry
    if state.phidot is None:
        F, _ = flow_rhs(phi, X, normalized)
        state.phidot = PotentialField(g, F)
    pd = state.phidot
    mu0 = g.grid.integrate(pd.values ** 2 * phi.ratio) / g.V
    mu1 = float(np.sum(g.eigenvalues * np.abs(pd.coeffs) ** 2)) / g.V
    return {"mu0": float(mu0), "mu1": mu1}


# -- backend adaptors --------------------------------------------------------

class _CP1Adaptor:
    def __init__(self, config, phi0):
        self.config = config
        self.X = config.holomorphic_field()
        self.normalized = config.normalized
        if config.integrator == "rk4" and config.dt > stability_bound(phi0.geometry) * (1 + 1e-12):
            raise ValueError(f"dt={config.dt} exceeds the rk4 stability bound "
                             f"{stability_bound(phi0.geometry):.3e}")

    def prepare(self, phi):
        phi.require_admissible()
        return normalize_to_H0(phi) if self.normalized else phi

    def step(self, state, dt):
        return mkrf_step(state, dt, self.config.integrator, self.X, self.normalized,
                         self.config.delta_pos, enforce_stability=False)

    def diagnostics(self, state):
        phi = state.phi
        F, a = flow_rhs(phi, self.X, self.normalized)
        state.phidot = PotentialField(phi.geometry, F)
        mu = mu_moments(state)
        n = norms(phi)
        g = phi.geometry
        return {
            "nu": k_energy_explicit(phi),
            "a": a_normalization(phi) if self.normalized else 0.0,
            "mu0": mu["mu0"],
            "mu1": mu["mu1"],
            "c0": n["C0"],
            "c2proxy": n["C2proxy"],
            "min_ratio": float(np.min(phi.ratio)),
            "I": normalization_I(phi),
            "volume": g.grid.integrate(phi.ratio),
        }

    def recenter(self, state):
        res = project_IJ(state.phi, eps1=np.inf)
        if res.flagged:
            return None, res
        moved = pullback_potential(res.sigma.inverse(), state.phi)
        gauge = list(state.gauge) + [(state.t, res.sigma)]
        return FlowState(moved, state.t, state.a_integral, gauge, None, state.defect, False,
                         state.recenter_failed), res


class _CalabiAdaptor:
    def __init__(self, config, phi0):
        self.config = config
        if config.integrator != "rk4":
            raise ValueError("the Calabi backend supports the rk4 integrator only")
        if config.recenter == "on":
            raise ValueError("recentering is not available on the Calabi backend")
        bound = cb.stability_bound(phi0.reference)
        if config.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt={config.dt} exceeds the rk4 stability bound {bound:.3e}")
        self.zhu_max = 0.0

    def prepare(self, phi):
        if np.min(phi.convexity()) <= 0:
            raise cb.ConvexityLoss(np.min(phi.convexity()))
        return phi.normalized()

    def step(self, state, dt):
        try:
            new, da = cb.reduced_mkrf_step(state.phi, dt, self.config.delta_pos)
        except cb.ConvexityLoss as exc:
            raise PositivityBreach(exc.minimum) from exc
        return FlowState(new, state.t + dt, state.a_integral + da, [], None, 0.0, state.armed,
                         state.recenter_failed)

    def diagnostics(self, state):
        phi = state.phi
        wd, a = cb.reduced_rhs(phi)
        state.phidot = wd
        mu0, mu1 = cb.reduced_moments(phi, wd)
        g = phi.grid
        c0 = float(np.max(np.abs(phi.w)))
        conv = phi.convexity()
        return {
            "nu": cb.reduced_modified_k_energy(phi),
            "a": a,
            "mu0": float(mu0),
            "mu1": float(mu1),
            "c0": c0,
            "c2proxy": c0 + float(np.max(np.abs(conv - 1.0))),
            "min_ratio": float(np.min(conv)),
            "I": phi.normalization_I(),
            "volume": cb.reduced_measure_integral(np.ones_like(g.tau), g),
            "futaki": cb.reduced_modified_futaki(phi, wd),
        }


def _adaptor(config, phi0):
    if config.backend == "cp1":
        return _CP1Adaptor(config, phi0)
    return _CalabiAdaptor(config, phi0)


# -- driver -----------------------------------------------------------------

def _sample(adaptor, state, event, base):
    d = adaptor.diagnostics(state)
    if base is None:
        base = d["a"] + d["nu"]
    row = (state.t, d["nu"], d["a"], d["a"] + d["nu"] - base, d["mu0"], d["mu1"], d["c0"],
           d["c2proxy"], d["min_ratio"], int(event))
    d["defect"] = state.defect
    return row, d, base


def run_flow(config, phi0, state=None, base=None, on_step=None):
    """
    Integrate from ``phi0`` (or a resumed ``state``) to ``config.t_end``.

    Samples are taken every ``output_every`` steps, at gauge events and at
    the end.  ``base`` is the reference value of ``a + nu`` used for the
    drift column (taken from the first sample when omitted).  ``on_step``
    is called with ``(step_index, state, base)`` after every step.
    """
    adaptor = _adaptor(config, phi0 if state is None else state.phi)
    if state is None:
        state = FlowState(adaptor.prepare(phi0))
    nsteps = int(round((config.t_end - state.t) / config.dt))
    if nsteps < 0:
        raise ValueError("t_end lies before the state time")
    start_index = int(round(state.t / config.dt))
    rows, extra = [], {"I_max": 0.0, "volume_drift": 0.0, "gauge_nu_jump": 0.0}
    messages = []
    flagged = False
    row, d, base = _sample(adaptor, state, False, base)
    rows.append(row)
    vol0 = d["volume"]
    futaki_max = 0.0
    termination = "t_end"
    defects = []

    def track(d):
        nonlocal futaki_max
        defects.append(d["defect"])
        extra["I_max"] = max(extra["I_max"], abs(d["I"]))
        extra["volume_drift"] = max(extra["volume_drift"], abs(d["volume"] - vol0))
        futaki_max = max(futaki_max, abs(d.get("futaki", 0.0)))

    track(d)
    for k in range(nsteps):
        index = start_index + k + 1
        try:
            state = adaptor.step(state, config.dt)
        except PositivityBreach as exc:
            exc.t = state.t
            exc.report = RunReport(rows, None, "positivity", state.gauge, True,
                                   messages + [str(exc)], state, extra)
            raise
        # exact multiples of dt keep split and unsplit runs identical
        state.t = index * config.dt
        event = False
        if config.recenter == "on" and not state.recenter_failed:
            c2 = norms(state.phi)["C2proxy"]
            if state.armed and c2 >= config.eps1:
                nu_before = k_energy_explicit(state.phi)
                moved, res = adaptor.recenter(state)
                if moved is None:
                    state.recenter_failed = True
                    messages.append(f"gauge fix failed at t={state.t:.6g}: {'; '.join(res.messages)}")
                else:
                    state = moved
                    event = True
                    extra["gauge_nu_jump"] = max(extra["gauge_nu_jump"],
                                                 abs(k_energy_explicit(state.phi) - nu_before))
            elif not state.armed and c2 < config.hysteresis * config.eps1:
                state.armed = True
        last = k == nsteps - 1
        stop = False
        if event or last or index % config.output_every == 0:
            row, d, base = _sample(adaptor, state, event, base)
            rows.append(row)
            track(d)
            stop = d["mu0"] < config.mu_floor
        if on_step is not None:
            on_step(index, state, base)
        if stop:
            termination = "converged"
            break
    flagged = flagged or state.recenter_failed
    if config.backend == "calabi":
        extra["futaki_max"] = futaki_max
        extra["zhu_max"] = cb.zhu_bound_check(state.phi)
    report = RunReport(rows, None, termination, list(state.gauge), flagged, messages, state, extra)
    report.extras["a_plus_nu_base"] = base
    report.extras["defect_series"] = defects
    report.theta = rate_fit(report)
    return report


def conservation_check(report, source="samples"):
    """
    ``max_t |a(t) + nu(t) - a(0) - nu(0)|``.

    ``source="integrator"`` returns the largest accumulated normalization
    defect instead: the same quantity for the flow integrated without the
    per-step shift back to ``I = 0``.
    """
    if source == "integrator":
        d = np.asarray(report.extras.get("defect_series", [0.0]), dtype=float)
        return float(np.max(np.abs(d - d[0])))
    a = report.column("a")
    nu = report.column("nu")
    if len(a) < 2:
        raise ValueError("need at least two samples")
    return float(np.max(np.abs(a + nu - a[0] - nu[0])))


def rate_fit(report_or_series, window=0.5, floor=1e-24):
    """
    Least-squares slope of ``log mu0`` over the trailing ``window`` fraction.

    Returns ``{"theta", "residual", "window"}``, or ``{"status":
    "converged below measurable"}`` when fewer than three samples above
    ``floor`` remain.
    """
    if isinstance(report_or_series, RunReport):
        t = report_or_series.column("t")
        mu = report_or_series.column("mu0")
    else:
        t, mu = (np.asarray(x, dtype=float) for x in report_or_series)
    if len(t) < 3:
        return {"status": "too few samples"}
    t0 = t[0] + (1.0 - window) * (t[-1] - t[0])
    sel = (t >= t0 - 1e-12) & (mu > floor)
    if np.count_nonzero(sel) < 3:
        return {"status": "converged below measurable"}
    tt, y = t[sel], np.log(mu[sel])
    coef = np.polyfit(tt, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, tt) - y) ** 2)))
    return {"theta": float(-coef[0]), "residual": resid, "window": [float(tt[0]), float(tt[-1])]}


# -- weak initial data --------------------------------------------------------

def weak_class_check(phi0, eps0, B, p):
    """
    Sup norm of ``phi0`` and the ``L^p`` norm of ``omega_phi / omega``.

    The ``L^p`` norm uses the normalized measure ``omega / V`` (so the norm
    of 1 is 1); ``p = inf`` takes the grid maximum.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    phi0.require_admissible()
    g = phi0.geometry
    sup = float(np.max(np.abs(phi0.values)))
    r = phi0.ratio
    if math.isinf(p):
        rn = float(np.max(r))
    else:
        rn = float((g.grid.integrate(r ** p) / g.V) ** (1.0 / p))
    return {"member": bool(sup <= eps0 and rn <= B), "sup": sup, "ratio_norm": rn}


def _unnormalized_run(phi0, t0, dt, delta_pos):
    state = FlowState(phi0)
    nsteps = max(1, int(math.ceil(t0 / dt - 1e-9)))
    h = t0 / nsteps
    for _ in range(nsteps):
        state = mkrf_step(state, h, "rk4", None, False, delta_pos, enforce_stability=False)
    return state.phi


def smoothing_probe(phi0, t0=0.1, dt=None, delta_pos=1e-6):
    """
    Run the ``a = 0`` flow from rough data to ``t0``.

    The step is ``min(1e-3, 2 min(r_0) / lambda_max)``, so the stiffness of
    nearly degenerate data is resolved.  Returns ``C2proxy(phi(t0))``, the
    two sup norms and the maximum-principle verdict.
    """
    phi0.require_admissible()
    g = phi0.geometry
    if dt is None:
        lam_max = g.L * (g.L + 1) / 2.0
        dt = min(1e-3, 2.0 * float(np.min(phi0.ratio)) / lam_max)
    sup0 = float(np.max(np.abs(phi0.values)))
    phi = _unnormalized_run(phi0, t0, dt, delta_pos) if sup0 > 0 else phi0
    sup_t = float(np.max(np.abs(phi.values)))
    return {
        "c2proxy": norms(phi)["C2proxy"],
        "sup0": sup0,
        "sup_t": sup_t,
        "bound_ok": bool(sup_t <= math.exp(t0) * sup0 + 1e-8),
        "dt": dt,
    }


def _random_shape(geometry, rng, decay, lmin=1, lmax=None):
    L = geometry.L if lmax is None else lmax
    A = geometry.grid.zeros()
    for l in range(lmin, L + 1):
        sd = (1.0 + l) ** (-decay)
        A[l, 0] = rng.normal() * sd
        for m in range(1, l + 1):
            A[l, m] = (rng.normal() - 1j * rng.normal()) * sd
    return A


def random_potential(geometry, rng, c2proxy, lmin=2, lmax=4):
    """Smooth normalized potential with low-degree content and given C2proxy."""
    A = _random_shape(geometry, rng, 1.0, lmin, lmax)
    unit = geometry.field(A)
    scale = c2proxy / norms(unit)["C2proxy"]
    phi = normalize_to_H0(unit * scale)
    # the normalization constant changes C0; rescale once more
    for _ in range(20):
        c2 = norms(phi)["C2proxy"]
        if abs(c2 - c2proxy) <= 1e-12 * c2proxy:
            break
        scale *= c2proxy / c2
        phi = normalize_to_H0(unit * scale)
    return phi


def _clipped(geometry, A, c, floor, fine, max_iter=500):
    """
    Admissible potential whose volume ratio is the rough ratio ``1 + c Delta f``
    clipped at ``floor``.  Clipping and bandlimiting alternate on the
    oversampled grid ``fine`` until the bandlimited ratio stays above
    ``floor / 2`` there, so positivity also holds between the nodes of
    ``geometry``.
    """
    lam = geometry.eigenvalues
    r = 1.0 + fine.synthesize(-lam * A * c)
    R = fine.analyze(r)
    for _ in range(max_iter):
        if np.min(r) >= 0.5 * floor:
            break
        R = fine.analyze(np.maximum(r, floor))
        R[0, 0] = np.sqrt(4 * np.pi)
        r = fine.synthesize(R)
    else:
        raise ValueError("clipping did not reach an admissible ratio")
    B = np.where(lam > 0, -R / np.where(lam > 0, lam, 1.0), 0.0)
    return geometry.field(B)


def rough_potential(geometry, rng, sup_norm, floor=0.05):
    """
    Rough admissible potential with coefficient law ``sd ~ (1 + l)^{-3/2}``.

    The volume ratio is clipped below at ``floor`` (see ``_clipped``); the
    amplitude is then solved for the requested sup norm by ``brentq``.  The returned
    potential has mean zero.
    """
    A = _random_shape(geometry, rng, 1.5)
    fine = CP1Geometry(geometry.L, 4 * geometry.grid.nlat, 4 * geometry.grid.nlon).grid

    def sup_of(c):
        return float(np.max(np.abs(_clipped(geometry, A, c, floor, fine).values)))

    hi = 1.0
    while sup_of(hi) < sup_norm:
        hi *= 2.0
        if hi > 1e3:
            raise ValueError("cannot reach the requested sup norm")
    c = brentq(lambda c: sup_of(c) - sup_norm, 0.0, hi, xtol=1e-14, rtol=1e-13)
    phi = _clipped(geometry, A, c, floor, fine)
    phi.require_admissible()
    return phi

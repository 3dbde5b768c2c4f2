"""
Fubini-Study geometry of CP^1 with spectral calculus.

Conventions
-----------
The reference form is the round area form of the unit sphere, so
``V = 4 pi``, ``Ric(omega) = omega`` and the average scalar curvature is 1.
The Laplacian is the complex one, ``Delta = g^{z zbar} d_z d_zbar``, which is
half the Laplace-Beltrami operator: degree-``l`` harmonics have eigenvalue
``-l(l+1)/2``.  For a potential ``phi`` the volume ratio is
``omega_phi / omega = 1 + Delta phi``.

Points are represented by unit homogeneous vectors ``w = (W0, W1)`` with
``z = W0 / W1 = tan(theta/2) e^{i phi}``; ``SL(2, C)`` acts by matrix
multiplication on ``w``, i.e. by ``z -> (a z + b) / (c z + d)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .sphere import SphericalGrid

__all__ = [
    "AdmissibilityError",
    "GeometryMismatch",
    "CP1Geometry",
    "PotentialField",
    "ComplexPotential",
    "AutomorphismElement",
    "HolomorphicField",
    "build_geometry",
    "complex_laplacian",
    "volume_ratio",
    "integrate",
    "scalar_curvature",
    "ricci_potential",
    "gauge_potential",
    "pullback_potential",
    "theta_of",
    "spectrum",
    "cluster_eigenvalues",
    "norms",
    "sl2_basis",
]

MIN_BANDLIMIT = 8


class AdmissibilityError(ValueError):
    """Raised when ``1 + Delta phi`` is not positive on the grid."""

    def __init__(self, minimum, message=None):
        self.minimum = float(minimum)
        super().__init__(message or f"volume ratio not positive: grid minimum {self.minimum:.6g}")


class GeometryMismatch(ValueError):
    pass


class CP1Geometry:
    """
    Discretized round CP^1 at bandlimit ``L``.

    Immutable after construction.  All fields built on one geometry share its
    grid; operations between fields of different geometries are rejected.
    """

    n = 1
    S_bar = 1.0

    def __init__(self, L, nlat=None, nlon=None):
        if L < MIN_BANDLIMIT:
            raise ValueError(
                f"bandlimit L={L} too small: need L >= {MIN_BANDLIMIT} to resolve degree-2 checks")
        self.grid = SphericalGrid(L, nlat=nlat, nlon=nlon)
        self.L = self.grid.L
        self.V = 4.0 * np.pi
        l = np.arange(self.L + 1, dtype=float)
        self.eigenvalues = (l * (l + 1) / 2.0)[:, None] * np.ones((1, self.L + 1))
        self.eigenvalues = np.where(self.grid.mask, self.eigenvalues, 0.0)
        self.W = self.grid.homogeneous()

    @property
    def key(self):
        return (self.L, self.grid.nlat, self.grid.nlon)

    def __repr__(self):
        return f"CP1Geometry(L={self.L}, grid={self.grid.nlat}x{self.grid.nlon})"

    # -- construction helpers
    def field(self, coeffs):
        return PotentialField(self, np.asarray(coeffs, dtype=complex))

    def from_values(self, values):
        """Project grid values to a bandlimited field."""
        return PotentialField(self, self.grid.analyze(values))

    def constant(self, c):
        A = self.grid.zeros()
        A[0, 0] = c * np.sqrt(4 * np.pi)
        return PotentialField(self, A)

    def zero(self):
        return PotentialField(self, self.grid.zeros())

    def harmonic(self, l, m, kind="cos"):
        """Real orthonormal harmonic of degree ``l`` and order ``m``."""
        A = self.grid.zeros()
        A[l, m] = 1.0 if (kind == "cos" or m == 0) else -1j
        return PotentialField(self, A)

    # -- coefficient-space algebra
    def inner(self, A, B):
        """L2(omega) inner product of two real fields given by coefficients."""
        return float(np.sum((A * np.conj(B)).real))

    def mean(self, A):
        return float(A[0, 0].real) / np.sqrt(4 * np.pi)

    def integrate_values(self, values, weight=None):
        if weight is None:
            return self.grid.integrate(values)
        return self.grid.integrate(values * weight)

    def check(self, *fields):
        for f in fields:
            if f.geometry is not self and f.geometry.key != self.key:
                raise GeometryMismatch(f"field on {f.geometry!r} used with {self!r}")

    # -- point maps
    def points_of(self, W):
        """Colatitude and longitude of homogeneous vectors ``W``."""
        a0 = np.abs(W[0])
        a1 = np.abs(W[1])
        theta = 2.0 * np.arctan2(a0, a1)
        phi = np.angle(W[0]) - np.angle(W[1])
        return theta, np.mod(phi, 2 * np.pi)

    def moment(self, A):
        """``w* A w / |w|^2`` on the grid for a 2x2 matrix ``A``."""
        W = self.W
        AW = np.einsum("ij,j...->i...", A, W)
        return np.sum(np.conj(W) * AW, axis=0) / np.sum(np.abs(W) ** 2, axis=0)

    def vector_field_derivative(self, B, f):
        """
        Derivative of the real field ``f`` along the flow of ``exp(t B)``.

        Returns grid values of ``d/dt f(exp(tB) p)`` at ``t = 0``.
        """
        W = self.W
        Wd = np.einsum("ij,j...->i...", B, W)
        a0 = np.abs(W[0])
        a1 = np.abs(W[1])
        da0 = (np.conj(W[0]) * Wd[0]).real / a0
        da1 = (np.conj(W[1]) * Wd[1]).real / a1
        dtheta = 2.0 * (a1 * da0 - a0 * da1) / (a0 ** 2 + a1 ** 2)
        dphi = (Wd[0] / W[0]).imag - (Wd[1] / W[1]).imag
        f_theta, f_phi = self.grid.gradient(f.coeffs)
        sin_t = self.grid.sin_theta[:, None]
        return f_theta * dtheta + f_phi * sin_t * dphi


@dataclass(frozen=True, eq=False)
class PotentialField:
    """
    Real function on CP^1 stored by harmonic coefficients up to degree L.

    Grid values are synthesized lazily and cached.
    """

    geometry: CP1Geometry
    coeffs: np.ndarray

    @cached_property
    def values(self):
        return self.geometry.grid.synthesize(self.coeffs)

    @cached_property
    def laplacian_coeffs(self):
        return -self.geometry.eigenvalues * self.coeffs

    @cached_property
    def laplacian_values(self):
        return self.geometry.grid.synthesize(self.laplacian_coeffs)

    @cached_property
    def ratio(self):
        """Grid values of ``1 + Delta phi``."""
        return 1.0 + self.laplacian_values

    @property
    def admissible(self):
        return bool(np.min(self.ratio) > 0.0)

    def require_admissible(self):
        rmin = np.min(self.ratio)
        if not rmin > 0.0:
            raise AdmissibilityError(rmin)
        return self

    @property
    def L(self):
        return self.geometry.L

    def mean(self):
        return self.geometry.mean(self.coeffs)

    def shift(self, c):
        A = self.coeffs.copy()
        A[0, 0] += c * np.sqrt(4 * np.pi)
        return PotentialField(self.geometry, A)

    def _other(self, other):
        if isinstance(other, PotentialField):
            self.geometry.check(other)
            return other.coeffs
        return None

    def __add__(self, other):
        B = self._other(other)
        if B is None:
            return self.shift(float(other))
        return PotentialField(self.geometry, self.coeffs + B)

    __radd__ = __add__

    def __sub__(self, other):
        B = self._other(other)
        if B is None:
            return self.shift(-float(other))
        return PotentialField(self.geometry, self.coeffs - B)

    def __neg__(self):
        return PotentialField(self.geometry, -self.coeffs)

    def __mul__(self, s):
        return PotentialField(self.geometry, self.coeffs * float(s))

    __rmul__ = __mul__

    def __repr__(self):
        return f"PotentialField(L={self.L}, mean={self.mean():.6g})"


@dataclass(frozen=True)
class ComplexPotential:
    """Complex-valued function stored as a pair of real fields."""

    real: PotentialField
    imag: PotentialField

    @property
    def values(self):
        return self.real.values + 1j * self.imag.values


def _unit_det(M):
    M = np.asarray(M, dtype=complex).reshape(2, 2)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) == 0:
        raise ValueError("singular matrix")
    if abs(det - 1.0) <= 8 * np.finfo(float).eps:
        # already normalized; keep stored entries bit-exact
        return M
    return M / np.sqrt(det)


@dataclass(frozen=True, eq=False)
class AutomorphismElement:
    """
    Element of PSL(2, C) with a unit-determinant representative.

    Composition ``s1 @ s2`` is the map ``s1 o s2``; pullbacks then satisfy
    ``(s1 @ s2)^* = s2^* s1^*``.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _unit_det(self.matrix))

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def exp(cls, A):
        return cls(scipy.linalg.expm(np.asarray(A, dtype=complex)))

    @classmethod
    def from_entries(cls, a, b, c, d):
        return cls(np.array([[a, b], [c, d]], dtype=complex))

    @property
    def entries(self):
        M = self.matrix
        return M[0, 0], M[0, 1], M[1, 0], M[1, 1]

    @property
    def det_defect(self):
        a, b, c, d = self.entries
        return abs(a * d - b * c - 1.0)

    def __matmul__(self, other):
        return AutomorphismElement(self.matrix @ other.matrix)

    def inverse(self):
        a, b, c, d = self.entries
        return AutomorphismElement(np.array([[d, -b], [-c, a]]))

    def positive_part(self):
        """Hermitian logarithm of ``(s* s)^{1/2}``; determines the pulled-back metric."""
        H = self.matrix.conj().T @ self.matrix
        vals, vecs = np.linalg.eigh(H)
        return (vecs * (0.5 * np.log(vals))) @ vecs.conj().T

    def metric_distance(self, other):
        """Distance between ``s^* omega`` and ``t^* omega`` in the coset parameters."""
        return float(np.linalg.norm(self.positive_part() - other.positive_part()))

    def apply(self, W):
        return np.einsum("ij,j...->i...", self.matrix, W)


def sl2_basis():
    """Real basis of sl(2, C): three Hermitian then three anti-Hermitian generators."""
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    s3 = np.array([[1, 0], [0, -1]], dtype=complex)
    herm = [0.5 * s for s in (s1, s2, s3)]
    return herm + [1j * h for h in herm]


@dataclass(eq=False)
class HolomorphicField:
    """
    Holomorphic vector field on CP^1 given by a trace-free 2x2 matrix.

    The real flow is ``exp(t A)``.  ``derivative(f)`` returns the complex
    derivative ``X(f) = V_A f - i V_{iA} f`` whose real part is the derivative
    along the real flow.  The holomorphy potential is complex,
    ``theta_X = 4 w* A w / |w|^2 + c``; its real part satisfies
    ``L_{Re X} omega = i d dbar Re theta_X``.
    """

    matrix: np.ndarray
    _theta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex).reshape(2, 2)
        tr = np.trace(self.matrix)
        if abs(tr) > 1e-12:
            raise ValueError(f"holomorphic field must be trace-free, trace={tr}")

    @classmethod
    def zero(cls):
        return cls(np.zeros((2, 2)))

    def flow(self, t):
        return AutomorphismElement.exp(t * self.matrix)

    def real_derivative(self, f):
        """``Re X (f)``: derivative of ``f`` along the real flow ``exp(tA)``."""
        return f.geometry.vector_field_derivative(self.matrix, f)

    def derivative(self, f):
        g = f.geometry
        return g.vector_field_derivative(self.matrix, f) - 1j * g.vector_field_derivative(
            1j * self.matrix, f)

    def theta(self, geometry):
        key = geometry.key
        if key not in self._theta:
            self._theta[key] = theta_of(self, geometry)
        return self._theta[key]


def build_geometry(L):
    return CP1Geometry(L)


def complex_laplacian(phi):
    return PotentialField(phi.geometry, phi.laplacian_coeffs)


def volume_ratio(phi):
    """Grid values of ``omega_phi / omega = 1 + Delta phi``; must be positive."""
    phi.require_admissible()
    return phi.ratio


def integrate(f, measure=None):
    """
    Integral of ``f`` against ``omega`` or, if ``measure`` is a potential,
    against ``omega_measure``.  ``f`` is a field or grid values.
    """
    values = f.values if hasattr(f, "values") else np.asarray(f)
    if measure is None:
        geom = f.geometry if hasattr(f, "geometry") else None
        if geom is None:
            raise TypeError("grid values need an explicit measure potential")
        return geom.grid.integrate(values)
    if hasattr(f, "geometry"):
        measure.geometry.check(f)
    return measure.geometry.grid.integrate(values * volume_ratio(measure))


def log_ratio(phi):
    """Bandlimited projection of ``log(1 + Delta phi)``."""
    return phi.geometry.from_values(np.log(volume_ratio(phi)))


def scalar_curvature(phi):
    """Grid values of ``S_phi = (1 - Delta log(1 + Delta phi)) / (1 + Delta phi)``."""
    r = volume_ratio(phi)
    lr = log_ratio(phi)
    return (1.0 - lr.laplacian_values) / r


def ricci_potential(phi):
    """
    Ricci potential ``h`` of ``omega_phi``: ``Delta_phi h = S_phi - 1`` and
    ``int e^h omega_phi = V``.  For n = 1 this is ``-log ratio - phi + c``.
    """
    g = phi.geometry
    r = volume_ratio(phi)
    h = -(log_ratio(phi) + phi)
    c = np.log(g.V / g.grid.integrate(np.exp(h.values) * r))
    return h.shift(c)


def _normalize_I(phi):
    from .functionals import normalize_to_H0
    return normalize_to_H0(phi)


def gauge_potential(sigma, geometry):
    """
    Potential ``rho`` with ``sigma^* omega = omega + i d dbar rho``, normalized
    to ``I(rho) = 0``.
    """
    W = geometry.W
    SW = sigma.apply(W)
    vals = 2.0 * np.log(np.sum(np.abs(SW) ** 2, axis=0) / np.sum(np.abs(W) ** 2, axis=0))
    rho = geometry.from_values(vals)
    tail = np.abs(rho.coeffs[-1]).max()
    if tail > 1e-9:
        warnings.warn(f"gauge potential not resolved at L={geometry.L} (tail {tail:.2e})",
                      RuntimeWarning, stacklevel=2)
    return _normalize_I(rho)


def pullback_potential(sigma, phi):
    """
    Normalized potential of ``sigma^* omega_phi`` relative to ``omega``:
    ``phi o sigma + rho_sigma`` shifted to ``I = 0``.
    """
    phi.require_admissible()
    g = phi.geometry
    SW = sigma.apply(g.W)
    theta, lon = g.points_of(SW)
    moved = g.grid.evaluate(phi.coeffs, theta, lon)
    rho = 2.0 * np.log(np.sum(np.abs(SW) ** 2, axis=0) / np.sum(np.abs(g.W) ** 2, axis=0))
    out = g.from_values(moved + rho)
    if not out.admissible:
        raise AdmissibilityError(np.min(out.ratio), "pullback lost positivity (discretization failure)")
    return _normalize_I(out)


def theta_of(X, geometry):
    """
    Complex holomorphy potential of ``X`` normalized by ``int e^theta omega = V``.
    """
    m = 4.0 * geometry.moment(X.matrix)
    re = geometry.from_values(m.real)
    im = geometry.from_values(m.imag)
    vals = re.values + 1j * im.values
    z = geometry.grid.integrate(np.exp(vals).real) + 1j * geometry.grid.integrate(np.exp(vals).imag)
    c = np.log(geometry.V / z)
    return ComplexPotential(re.shift(c.real), im.shift(c.imag))


def _basis(geometry):
    cached = getattr(geometry, "_basis_cache", None)
    if cached is None:
        cached = geometry.grid.basis_values()
        geometry._basis_cache = cached
    return cached


def spectrum(phi, k, return_fields=False):
    """
    Lowest ``k`` eigenvalues of ``-Delta_phi``.

    Galerkin on the harmonics of degree <= L: the Dirichlet form is conformally
    invariant, so the stiffness is ``diag(l(l+1)/2)`` and only the mass
    matrix carries the weight ``omega_phi / omega``.
    """
    g = phi.geometry
    r = volume_ratio(phi)
    B, degs = _basis(g)
    if k > B.shape[1]:
        raise ValueError(f"k={k} exceeds the {B.shape[1]} available basis functions")
    K = np.diag(degs * (degs + 1) / 2.0)
    M = B.T @ (B * (g.grid.area * r).ravel()[:, None])
    try:
        vals, vecs = scipy.linalg.eigh(K, M, subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    if not return_fields:
        return vals
    fields = [g.from_values((B @ vecs[:, j]).reshape(g.grid.shape)) for j in range(k)]
    return vals, fields


def cluster_eigenvalues(vals, tol=1e-6):
    """Group sorted eigenvalues into ``(value, multiplicity)`` pairs."""
    out = []
    for v in vals:
        if out and abs(v - out[-1][0]) <= tol * max(1.0, abs(v)):
            c, n = out[-1]
            out[-1] = ((c * n + v) / (n + 1), n + 1)
        else:
            out.append((float(v), 1))
    return out


def norms(phi):
    """
    ``C0 = max|phi|``, ``C2proxy = C0 + max|Delta phi|`` (grid maxima) and
    ``W12 = (int phi^2 + |grad phi|^2 omega)^{1/2}`` with the Riemannian gradient.
    """
    g = phi.geometry
    c0 = float(np.max(np.abs(phi.values)))
    c2 = c0 + float(np.max(np.abs(phi.laplacian_values)))
    w = 1.0 + 2.0 * g.eigenvalues
    w12 = float(np.sqrt(np.sum(w * np.abs(phi.coeffs) ** 2)))
    return {"C0": c0, "C2proxy": c2, "W12": w12}

"""
Real spherical-harmonic transforms on a Gauss-Legendre x equispaced grid.

Coefficients of a real field are stored as a complex lower-triangular array
``A[l, m]`` (``0 <= m <= l <= L``) with

    f(theta, phi) = sum_{l, m} Pbar_lm(cos theta) k_m Re(A_lm e^{i m phi}),

where ``Pbar_lm`` is normalized on [-1, 1] and ``k_0 = 1/sqrt(2 pi)``,
``k_m = 1/sqrt(pi)``.  ``Re A`` and ``-Im A`` are then the coefficients of the
orthonormal real harmonics ``Y_lm^c`` and ``Y_lm^s`` on the unit sphere, so
the coefficient l2 norm equals the L2 norm of the field.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SphericalGrid", "legendre_table", "degree_mask"]


def legendre_table(L, x, derivative=False):
    """
    Normalized associated Legendre functions ``Pbar_lm(x)`` for ``m <= l <= L``.

    Parameters
    ----------
    L : int
        Maximum degree.
    x : array_like
        Points in (-1, 1); the derivative table divides by ``sqrt(1 - x^2)``.
    derivative : bool
        Also return ``d Pbar_lm / d theta`` with ``x = cos theta``.

    Returns
    -------
    P : ndarray, shape (L + 1, L + 1) + x.shape
        ``P[l, m]``; entries with ``m > l`` are zero.
    dP : ndarray, optional
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((L + 1, L + 1) + x.shape)
    P[0, 0] = np.sqrt(0.5)
    for m in range(1, L + 1):
        P[m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m + 1, m] = np.sqrt(2 * m + 3.0) * x * P[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    if not derivative:
        return P
    dP = np.zeros_like(P)
    for l in range(1, L + 1):
        for m in range(0, l + 1):
            c = np.sqrt((2 * l + 1.0) / (2 * l - 1) * (l * l - m * m))
            prev = P[l - 1, m] if m <= l - 1 else 0.0
            dP[l, m] = (l * x * P[l, m] - c * prev) / s
    return P, dP


def degree_mask(L):
    """Boolean (L+1, L+1) mask of valid (l, m) slots."""
    l = np.arange(L + 1)[:, None]
    m = np.arange(L + 1)[None, :]
    return m <= l


class SphericalGrid:
    """
    Quadrature grid and transforms for fields of bandlimit ``L``.

    The default grid integrates products of three degree-``L`` fields
    exactly (3/2-rule padding), which keeps the nonlinear terms of the
    flow dealiased.

    Parameters
    ----------
    L : int
        Bandlimit.
    nlat, nlon : int, optional
        Override the padded defaults ``(3L)//2 + 2`` and ``3L + 3``.
    """

    def __init__(self, L, nlat=None, nlon=None):
        if L < 1:
            raise ValueError("bandlimit must be positive")
        self.L = int(L)
        self.nlat = int(nlat) if nlat is not None else (3 * self.L) // 2 + 2
        self.nlon = int(nlon) if nlon is not None else 3 * self.L + 3
        if self.nlon < 2 * self.L + 1:
            raise ValueError("need at least 2L+1 longitudes")
        if self.nlat < self.L + 1:
            raise ValueError("need at least L+1 latitudes")
        x, w = np.polynomial.legendre.leggauss(self.nlat)
        # north pole first
        self.x = x[::-1].copy()
        self.weights = w[::-1].copy()
        self.theta = np.arccos(self.x)
        self.sin_theta = np.sqrt(1.0 - self.x ** 2)
        self.phi = 2.0 * np.pi * np.arange(self.nlon) / self.nlon
        self.P, self.dP = legendre_table(self.L, self.x, derivative=True)
        m = np.arange(self.L + 1)
        self.k = np.where(m == 0, 1.0 / np.sqrt(2 * np.pi), 1.0 / np.sqrt(np.pi))
        self.mask = degree_mask(self.L)
        l = np.arange(self.L + 1)
        self.degrees = np.broadcast_to(l[:, None], (self.L + 1, self.L + 1))
        self.orders = np.broadcast_to(m[None, :], (self.L + 1, self.L + 1))
        # area element per node: GL weight times longitude spacing
        self.area = np.outer(self.weights, np.full(self.nlon, 2 * np.pi / self.nlon))
        # precomputed synthesis/analysis kernels, layout (m, l, lat)
        self._Pk = np.ascontiguousarray(
            np.transpose(self.P * self.k[None, :, None], (1, 0, 2)))
        self._dPk = np.ascontiguousarray(
            np.transpose(self.dP * self.k[None, :, None], (1, 0, 2)))
        self._Pkw = self._Pk * self.weights[None, None, :] * (2 * np.pi / self.nlon)

    @property
    def shape(self):
        return (self.nlat, self.nlon)

    def zeros(self, dtype=complex):
        return np.zeros((self.L + 1, self.L + 1), dtype=dtype)

    def _from_modes(self, G):
        # G[m, lat] -> grid values via inverse real FFT
        N = self.nlon
        H = np.zeros((self.nlat, N // 2 + 1), dtype=complex)
        H[:, 0] = N * G[0]
        H[:, 1:self.L + 1] = 0.5 * N * G[1:].T
        return np.fft.irfft(H, n=N, axis=1)

    def synthesize(self, A):
        """Grid values of the field with coefficients ``A``."""
        G = np.einsum("mli,lm->mi", self._Pk, A)
        return self._from_modes(G)

    def analyze(self, f):
        """Quadrature projection of grid values onto degree <= L."""
        F = np.fft.rfft(np.asarray(f, dtype=float), axis=1)[:, :self.L + 1]
        A = np.einsum("mli,im->lm", self._Pkw, F)
        A[~self.mask] = 0.0
        A[:, 0] = A[:, 0].real
        return A

    def gradient(self, A):
        """
        Components of the Riemannian gradient in the orthonormal frame.

        Returns ``(d f / d theta, (1 / sin theta) d f / d phi)`` on the grid.
        """
        G_theta = np.einsum("mli,lm->mi", self._dPk, A)
        m = np.arange(self.L + 1)[:, None]
        G_phi = np.einsum("mli,lm->mi", self._Pk, A) * (1j * m)
        f_theta = self._from_modes(G_theta)
        f_phi = self._from_modes(G_phi) / self.sin_theta[:, None]
        return f_theta, f_phi

    def integrate(self, f):
        """Quadrature of grid values against the round area form."""
        return float(np.sum(self.area * f))

    def evaluate(self, A, theta, phi, chunk=2048):
        """Evaluate the field at scattered points ``(theta, phi)``."""
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        shape = theta.shape
        th = theta.ravel()
        ph = phi.ravel()
        out = np.empty(th.size)
        m = np.arange(self.L + 1)
        Ak = A * self.k[None, :]
        for start in range(0, th.size, chunk):
            sl = slice(start, start + chunk)
            P = legendre_table(self.L, np.cos(th[sl]))
            G = np.einsum("lmp,lm->pm", P, Ak)
            E = np.exp(1j * np.outer(ph[sl], m))
            out[sl] = np.sum((G * E).real, axis=1)
        return out.reshape(shape)

    def basis_values(self, Lb=None):
        """
        Real orthonormal harmonics of degree <= ``Lb`` on the grid.

        Returns
        -------
        B : ndarray, shape (nlat * nlon, (Lb + 1)**2)
        l : ndarray of int
            Degree of each column.
        """
        Lb = self.L if Lb is None else int(Lb)
        cols = []
        degs = []
        for l in range(Lb + 1):
            for m in range(0, l + 1):
                A = np.zeros((self.L + 1, self.L + 1), dtype=complex)
                A[l, m] = 1.0
                cols.append(self.synthesize(A).ravel())
                degs.append(l)
                if m > 0:
                    A[l, m] = -1j
                    cols.append(self.synthesize(A).ravel())
                    degs.append(l)
        return np.array(cols).T, np.array(degs)

    def homogeneous(self):
        """Unit homogeneous coordinates ``(sin(t/2) e^{i p}, cos(t/2))``; z = W0/W1."""
        th = self.theta[:, None]
        ph = self.phi[None, :]
        W0 = np.sin(th / 2) * np.exp(1j * ph)
        W1 = np.cos(th / 2) * np.ones_like(ph)
        return np.stack([W0, W1])

"""Complex-time two-point functions, the four-point map and current fluctuations.

Two-point function (``x = (x1, x2)``)::

    C_{t+i alpha}(x) = <e_{x2}, exp(-itH) F_alpha^beta(H) e_{x1}>

so that ``C_0(x) = rho(a*_{x1} a_{x2})``.  The four-point map is the
antisymmetrised product

    c_{t+i alpha}(x, y) = sum_{pi, pi'} sgn(pi) sgn(pi')
        C_{t+i alpha}(y^{pi'1}, x^{pi1}) C_{-t+i(beta-alpha)}(x^{pi2}, y^{pi'2}).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ContractError, GeometryError
from .lattice_fields import Box
from .onebody import EigenSystem, fermi_function


# ---------------------------------------------------------------------------
# current elements
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CurrentElement:
    """``Im(a*(psi1) a(psi2))`` for real, finitely supported ``psi1, psi2``.

    Stored as sparse maps site -> coefficient.
    """

    psi1: Mapping
    psi2: Mapping
    kind: str = "general"

    @classmethod
    def bond(cls, x1, x2) -> "CurrentElement":
        """Bond current ``I_(x1,x2) = i(a*_{x2} a_{x1} - a*_{x1} a_{x2}) = -2 Im(a*_{x2} a_{x1})``."""
        x1, x2 = tuple(int(v) for v in x1), tuple(int(v) for v in x2)
        if sum(abs(a - b) for a, b in zip(x1, x2)) != 1:
            raise ContractError("bond current needs nearest-neighbour endpoints")
        return cls({x2: -2.0}, {x1: 1.0}, "bond")

    @classmethod
    def general(cls, psi1: Mapping, psi2: Mapping) -> "CurrentElement":
        to = lambda m: {tuple(int(v) for v in k): float(c) for k, c in m.items()}
        return cls(to(psi1), to(psi2), "general")

    def translate(self, z) -> "CurrentElement":
        z = tuple(int(v) for v in z)
        sh = lambda m: {tuple(a + b for a, b in zip(k, z)): c for k, c in m.items()}
        return CurrentElement(sh(self.psi1), sh(self.psi2), self.kind)

    def vectors(self, box: Box) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for m in (self.psi1, self.psi2):
            v = np.zeros(box.n)
            if m:
                idx = box.indices(np.array(list(m.keys())))
                np.add.at(v, idx, np.array(list(m.values())))
            out.append(v)
        return out[0], out[1]

    def matrix(self, box: Box) -> np.ndarray:
        """One-body matrix ``M`` with ``I = sum_xy M_xy a*_x a_y``."""
        p, q = self.vectors(box)
        return (np.outer(p, q) - np.outer(q, p)) / 2j


def expectation(symbol_entries: np.ndarray, m: np.ndarray) -> complex:
    """``rho(dGamma(M)) = tr(M d)``."""
    return complex(np.einsum("xy,yx->", m, symbol_entries))


def translate_sum_matrix(box: Box, element: CurrentElement, l: int) -> np.ndarray:
    """One-body matrix of ``sum_{z in Lambda_l} tau_z(I)``."""
    d = box.d
    if l < 0:
        raise ContractError("averaging half-side must be >= 0")
    total = np.zeros((box.n, box.n), dtype=complex)
    for z in itertools.product(range(-l, l + 1), repeat=d):
        try:
            p, q = element.translate(z).vectors(box)
        except GeometryError as exc:
            raise GeometryError(f"translate by {z} leaves the ambient box") from exc
        total += (np.outer(p, q) - np.outer(q, p)) / 2j
    return total


# ---------------------------------------------------------------------------
# two- and four-point functions
# ---------------------------------------------------------------------------
def correlation_matrix(eig: EigenSystem, beta: float, t: float, alpha: float) -> np.ndarray:
    """``exp(-itH) F_alpha^beta(H)``; entry ``[x2, x1]`` is ``C_{t+i alpha}(x1, x2)``."""
    if not (0.0 <= alpha <= beta):
        raise ContractError(f"imaginary time {alpha} outside [0, {beta}]")
    lam = eig.eigenvalues
    w = np.exp(-1j * t * lam) * fermi_function(lam, beta, alpha)
    v = eig.eigenvectors
    return (v * w) @ v.conj().T


def two_point(eig: EigenSystem, beta: float, t: float, alpha: float, pair) -> complex:
    if not (0.0 <= alpha <= beta):
        raise ContractError(f"imaginary time {alpha} outside [0, {beta}]")
    box = eig.box
    i1, i2 = box.index(pair[0]), box.index(pair[1])
    lam = eig.eigenvalues
    w = np.exp(-1j * t * lam) * fermi_function(lam, beta, alpha)
    v = eig.eigenvectors
    return complex((v[i2] * w) @ v[i1].conj())


_PERMS = (((0, 1), 1.0), ((1, 0), -1.0))


def four_point_from_matrices(c1: np.ndarray, c2: np.ndarray, xi, yi) -> complex:
    """Four-point map from cached two-point matrices and site indices."""
    total = 0j
    for (p1, p2), s in _PERMS:
        for (q1, q2), s2 in _PERMS:
            # C(u, v) = matrix[v, u]
            total += s * s2 * c1[xi[p1], yi[q1]] * c2[yi[q2], xi[p2]]
    return total


def four_point(eig: EigenSystem, beta: float, t: float, alpha: float, x, y) -> complex:
    box = eig.box
    c1 = correlation_matrix(eig, beta, t, alpha)
    c2 = correlation_matrix(eig, beta, -t, beta - alpha)
    xi = (box.index(x[0]), box.index(x[1]))
    yi = (box.index(y[0]), box.index(y[1]))
    return four_point_from_matrices(c1, c2, xi, yi)


# ---------------------------------------------------------------------------
# fluctuation form
# ---------------------------------------------------------------------------
def _antisym(box: Box, element: CurrentElement, l: int) -> np.ndarray:
    """``K = sum_z (psi1_z psi2_z^T - psi2_z psi1_z^T)``; ``K = 2i M`` for the translate sum."""
    return 2j * translate_sum_matrix(box, element, l)


def fluctuation_inner(eig: EigenSystem, beta: float, l: int, I: CurrentElement, J: CurrentElement,
                      t: float = 0.0) -> complex:
    """``<I, tau_t J>_l = rho(F_l(I)^* tau_t F_l(J))`` for centred translate averages.

    The double translate sum ``(4|Lambda_l|)^{-1} sum_{z1,z2} c_t(J_{z1}, I_{z2})``
    is contracted as ``tr(K_J^T C_t K_I C_{-t+i beta})``, which is the same
    finite sum reorganised.
    """
    box = eig.box
    vol = (2 * l + 1) ** box.d
    kx = _antisym(box, J, l)
    ky = _antisym(box, I, l)
    c1 = correlation_matrix(eig, beta, t, 0.0)
    c2 = correlation_matrix(eig, beta, -t, beta)
    return complex(np.einsum("bc,ba,ae,ec->", kx, c1, ky, c2) / (4 * vol))


def fluctuation_inner_bruteforce(eig: EigenSystem, beta: float, l: int, I: CurrentElement,
                                 J: CurrentElement, t: float = 0.0) -> complex:
    """Literal double translate sum over the four-point map (slow, for cross-checks)."""
    box = eig.box
    vol = (2 * l + 1) ** box.d
    c1 = correlation_matrix(eig, beta, t, 0.0)
    c2 = correlation_matrix(eig, beta, -t, beta)
    shifts = list(itertools.product(range(-l, l + 1), repeat=box.d))
    total = 0j
    for z1 in shifts:
        Jz = J.translate(z1)
        for z2 in shifts:
            Iz = I.translate(z2)
            for x1, a1 in Jz.psi1.items():
                for x2, a2 in Jz.psi2.items():
                    xi = (box.index(x1), box.index(x2))
                    for y1, b1 in Iz.psi1.items():
                        for y2, b2 in Iz.psi2.items():
                            yi = (box.index(y1), box.index(y2))
                            total += a1 * a2 * b1 * b2 * four_point_from_matrices(c1, c2, xi, yi)
    return total / (4 * vol)


def wick_truncated(symbol_entries: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    """Truncated ``rho(dGamma(A)^* dGamma(B))`` of a quasi-free state: ``tr(A^dag (1-d) B d)``."""
    d = symbol_entries
    one = np.eye(d.shape[0])
    return complex(np.trace(a.conj().T @ (one - d) @ b @ d))


def fluctuation_spectral(eig: EigenSystem, beta: float, l: int, I: CurrentElement, J: CurrentElement):
    """Coefficients ``G`` and frequencies ``nu`` with ``<I, tau_s J>_l = sum G_nm exp(i s nu_nm)``."""
    box = eig.box
    vol = (2 * l + 1) ** box.d
    v = eig.eigenvectors
    mx = v.conj().T @ translate_sum_matrix(box, J, l) @ v
    my = v.conj().T @ translate_sum_matrix(box, I, l) @ v
    f = fermi_function(eig.eigenvalues, beta)
    # tr(X e^{-isH} d Y (1-d) e^{isH}) = sum_{m,n} X_mn Y_nm f_n (1-f_m) e^{is(e_m - e_n)}
    g = (mx.T * my) * (f[:, None] * (1.0 - f)[None, :]) / vol
    nu = eig.eigenvalues[None, :] - eig.eigenvalues[:, None]
    return g, nu


def decay_profile(eig: EigenSystem, beta: float, t: float, alpha: float, origin=None):
    """Shell envelope ``[(r, max_{|x|=r} |C_{t+i alpha}(origin, x)|)]`` (Euclidean shells)."""
    delta = beta / 10.0
    if not (delta - 1e-15 <= alpha <= beta - delta + 1e-15):
        raise ContractError(f"imaginary time must lie in [{delta}, {beta - delta}]")
    box = eig.box
    origin = np.zeros(box.d, dtype=int) if origin is None else np.asarray(origin)
    c = correlation_matrix(eig, beta, t, alpha)
    col = c[:, box.index(origin)]
    r = np.linalg.norm(box.sites - origin, axis=1)
    radii = np.unique(np.round(r, 9))
    return [(float(rr), float(np.abs(col[np.isclose(r, rr)]).max())) for rr in radii]

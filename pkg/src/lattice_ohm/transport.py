"""Finite-volume transport coefficients and their ensemble averages.

Bond current: ``I_(x1,x2) = i(a*_{x2} a_{x1} - a*_{x1} a_{x2})``.  With
``J_k = sum_{x in Lambda_l} I_(x+e_k, x)`` the paramagnetic coefficient is

    Xi_p(t)_{kq} = |Lambda_l|^{-1} int_0^t rho(i[J_k, tau_s(J_q)]) ds

and is evaluated in the eigenbasis, where every term is an exponential in
``s`` integrated exactly.  The diamagnetic coefficient is the averaged bond
kinetic term ``sigma_d(x1, x2) = 2 Re <e_{x1}, d e_{x2}>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .correlations import CurrentElement, fluctuation_spectral
from .disorder import DisorderSpec, ensemble_stats, map_realizations, sample_realization
from .errors import ContractError, GeometryError
from .lattice_fields import Box, build_box
from .onebody import EigenSystem, Symbol, diagonalize, fermi_function, fermi_symbol, hamiltonian

DEGENERATE_REL = 1e-12
_T_CHUNK = 8


# ---------------------------------------------------------------------------
# current operators
# ---------------------------------------------------------------------------
def bond_current_matrix(box: Box, x1, x2) -> np.ndarray:
    """One-body matrix of ``I_(x1,x2)``: ``M[x2,x1] = i``, ``M[x1,x2] = -i``."""
    i1, i2 = box.index(x1), box.index(x2)
    m = np.zeros((box.n, box.n), dtype=complex)
    m[i2, i1] = 1j
    m[i1, i2] = -1j
    return m


def averaging_sites(box: Box, l: int) -> np.ndarray:
    if l < 0:
        raise ContractError("averaging half-side must be >= 0")
    if l + 1 > box.l:
        raise GeometryError(f"averaging box l={l} plus a bond does not fit in ambient box l={box.l}")
    return build_box(box.d, l).sites if l > 0 else np.zeros((1, box.d), dtype=np.int64)


def weighted_current_matrix(box: Box, tails, k: int, weights=None) -> np.ndarray:
    """``sum_x w_x I_(x+e_k, x)`` over the given tail sites."""
    tails = np.asarray(tails)
    e = np.zeros(box.d, dtype=np.int64)
    e[k] = 1
    it = box.indices(tails)
    ih = box.indices(tails + e)
    w = np.ones(len(it)) if weights is None else np.asarray(weights, dtype=float)
    m = np.zeros((box.n, box.n), dtype=complex)
    # bond (x+e_k, x): M[x, x+e_k] = i, M[x+e_k, x] = -i
    np.add.at(m, (it, ih), 1j * w)
    np.add.at(m, (ih, it), -1j * w)
    return m


WINDOWS = ("forward", "centred")


def window_bonds(box: Box, l: int, k: int, window: str = "forward"):
    """Tail sites and weights of the averaging window for direction ``k``.

    ``forward`` takes the bonds ``(x+e_k, x)`` with ``x in Lambda_l``.
    ``centred`` takes tails with ``x_k in [-l-1, l]`` and gives the two end
    layers weight 1/2; it carries the same total weight, has the same
    large-``l`` limit and is covariant under the reflection ``x_k -> -x_k``.
    """
    sites = averaging_sites(box, l)
    if window == "forward":
        return sites, np.ones(len(sites))
    if window != "centred":
        raise ContractError(f"window must be one of {WINDOWS}")
    e = np.zeros(box.d, dtype=np.int64)
    e[k] = 1
    extra = sites[sites[:, k] == -l] - e
    tails = np.concatenate([extra, sites])
    w = np.ones(len(tails))
    w[(tails[:, k] == -l - 1) | (tails[:, k] == l)] = 0.5
    return tails, w


def averaged_current_matrix(box: Box, l: int, k: int, window: str = "forward") -> np.ndarray:
    """``J_k = sum_{x in Lambda_l} I_(x+e_k, x)`` (or its centred variant)."""
    tails, w = window_bonds(box, l, k, window)
    return weighted_current_matrix(box, tails, k, w)


# ---------------------------------------------------------------------------
# spectral engine
# ---------------------------------------------------------------------------
def _time_factors(nu: np.ndarray, t: float, thr: float):
    """``sin(nu t)/nu`` and ``(1 - cos(nu t))/nu`` with their degenerate limits."""
    small = np.abs(nu) <= thr
    safe = np.where(small, 1.0, nu)
    s = np.where(small, t, np.sin(nu * t) / safe)
    c = np.where(small, 0.0, (1.0 - np.cos(nu * t)) / safe)
    return s, c


def commutator_kernel(eig: EigenSystem, beta: float, left: Sequence[np.ndarray],
                      right: Sequence[np.ndarray], tgrid, norm: float = 1.0) -> np.ndarray:
    """``K_ab(t) = norm^{-1} int_0^t rho(i[A_a, tau_s(B_b)]) ds`` for all pairs.

    In the eigenbasis ``rho(i[A, tau_s B]) = i sum_{nm} A_nm B_mn (f_n - f_m)
    e^{is(e_m - e_n)}``; the time integral is done term by term.
    Returns an array of shape ``(len(tgrid), len(left), len(right))``.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    v = eig.eigenvectors
    f = fermi_function(eig.eigenvalues, beta)
    nu = (eig.eigenvalues[None, :] - eig.eigenvalues[:, None]).ravel()   # nu[n,m] = e_m - e_n
    df = (f[:, None] - f[None, :]).ravel()
    thr = DEGENERATE_REL * max(eig.norm_max, 1e-300)
    a_eb = [v.conj().T @ a @ v for a in left]
    b_eb = [v.conj().T @ b @ v for b in right]
    w = np.stack([(a * b.T).ravel() * df for a in a_eb for b in b_eb], axis=1) / norm
    keep = np.nonzero(np.any(w != 0, axis=1))[0]
    w, nu = w[keep], nu[keep]
    # i * W * (s + i c) -> real part: -Re(W) c - Im(W) s
    out = np.empty((tgrid.size, w.shape[1]))
    for lo in range(0, tgrid.size, _T_CHUNK):
        ts = tgrid[lo:lo + _T_CHUNK]
        small = np.abs(nu) <= thr
        safe = np.where(small, 1.0, nu)
        arg = ts[:, None] * nu[None, :]
        s = np.where(small, ts[:, None], np.sin(arg) / safe)
        c = np.where(small, 0.0, (1.0 - np.cos(arg)) / safe)
        out[lo:lo + len(ts)] = -(c @ w.real) - (s @ w.imag)
    return out.reshape(tgrid.size, len(left), len(right))


def sigma_p(eig: EigenSystem, beta: float, x, y, t: float) -> float:
    """``int_0^t rho(i[I_y, tau_s(I_x)]) ds`` for bonds ``x = (x1, x2)``, ``y = (y1, y2)``."""
    box = eig.box
    a = bond_current_matrix(box, *y)
    b = bond_current_matrix(box, *x)
    return float(commutator_kernel(eig, beta, [a], [b], [t])[0, 0, 0])


def sigma_d(symbol: Symbol, box: Box, bond) -> float:
    """``2 Re <e_{x1}, d e_{x2}>``; lies in [-2, 2]."""
    i1, i2 = box.index(bond[0]), box.index(bond[1])
    return float(2.0 * symbol.entries[i1, i2].real)


def xi_p_l(eig: EigenSystem, beta: float, l: int, tgrid, window: str = "forward") -> np.ndarray:
    """Space-averaged paramagnetic coefficient, shape ``(T, d, d)``."""
    box = eig.box
    vol = (2 * l + 1) ** box.d
    cur = [averaged_current_matrix(box, l, k, window) for k in range(box.d)]
    return commutator_kernel(eig, beta, cur, cur, tgrid, norm=vol)


def xi_d_l(symbol: Symbol, l: int, box: Box) -> np.ndarray:
    """Space-averaged diamagnetic coefficient (diagonal ``d x d`` matrix)."""
    sites = averaging_sites(box, l)
    out = np.zeros((box.d, box.d))
    it = box.indices(sites)
    for k in range(box.d):
        e = np.zeros(box.d, dtype=np.int64)
        e[k] = 1
        ih = box.indices(sites + e)
        out[k, k] = 2.0 * symbol.entries[ih, it].real.mean()
    return out


# ---------------------------------------------------------------------------
# Gamma and Green-Kubo
# ---------------------------------------------------------------------------
def _pair_antisym(box: Box, l: int, k: int, window: str = "forward") -> np.ndarray:
    """``sum_x w_x (e_{x1} e_{x2}^T - e_{x2} e_{x1}^T)`` over the window bonds ``(x1, x2) = (x+e_k, x)``."""
    tails, w = window_bonds(box, l, k, window)
    e = np.zeros(box.d, dtype=np.int64)
    e[k] = 1
    i1 = box.indices(tails + e)
    i2 = box.indices(tails)
    m = np.zeros((box.n, box.n))
    np.add.at(m, (i1, i2), w)
    np.add.at(m, (i2, i1), -w)
    return m


def gamma(eig: EigenSystem, beta: float, l: int, k: int, q: int, tgrid, xi=None, window: str = "forward"):
    """Four-point imaginary-time integral ``Gamma_{kq}(t)`` and the identity residual.

    ``Gamma(t) = |Lambda_l|^{-1} sum_{x,y} int_0^beta c_{t+i alpha}((x+e_q,x),(y+e_k,y)) d alpha``
    with the alpha-integral done in closed form:
    ``int_0^beta F_alpha(e_n) F_{beta-alpha}(e_m) d alpha = (f_m - f_n)/(e_n - e_m)``.
    ``window`` selects the averaging bonds (and weights) as in :func:`window_bonds`.
    Returns ``(Gamma, residual)`` where the residual is
    ``max_t |Xi_p(t)_{kq} - (Gamma(t) - Gamma(0))|``.
    """
    box = eig.box
    vol = (2 * l + 1) ** box.d
    tgrid = np.asarray(tgrid, dtype=float)
    v = eig.eigenvectors
    lam = eig.eigenvalues
    f = fermi_function(lam, beta)
    x = v.T @ _pair_antisym(box, l, q, window) @ v.conj()
    y = v.conj().T @ _pair_antisym(box, l, k, window) @ v
    dlam = lam[:, None] - lam[None, :]                      # e_n - e_m
    thr = DEGENERATE_REL * max(eig.norm_max, 1e-300)
    small = np.abs(dlam) <= thr
    r = np.where(small, beta * f[:, None] * (1.0 - f[:, None]),
                 (f[None, :] - f[:, None]) / np.where(small, 1.0, dlam))
    coef = (r * x * y).ravel() / vol
    nu = (-dlam).ravel()                                     # e_m - e_n
    g = np.array([np.sum(coef * np.exp(1j * t * nu)) for t in tgrid])
    g0 = np.sum(coef)
    if xi is None:
        xi = xi_p_l(eig, beta, l, tgrid, window)[:, k, q]
    residual = float(np.max(np.abs(xi - (g - g0)))) if tgrid.size else 0.0
    return g, residual


def green_kubo(eig: EigenSystem, beta: float, l: int, k: int, q: int, tgrid) -> np.ndarray:
    """``int_0^t -2 Im <I_{e_k,0}, tau_s I_{e_q,0}>_l ds`` from the fluctuation form."""
    d = eig.box.d
    e_k = tuple(int(i == k) for i in range(d))
    e_q = tuple(int(i == q) for i in range(d))
    zero = (0,) * d
    g, nu = fluctuation_spectral(eig, beta, l, CurrentElement.bond(e_k, zero),
                                 CurrentElement.bond(e_q, zero))
    g, nu = g.ravel(), nu.ravel()
    thr = DEGENERATE_REL * max(eig.norm_max, 1e-300)
    out = []
    for t in np.asarray(tgrid, dtype=float):
        s, c = _time_factors(nu, t, thr)
        # int_0^t e^{is nu} ds = s + i c
        out.append(-2.0 * np.sum(g * (s + 1j * c)).imag)
    return np.array(out)


def green_kubo_check(eig: EigenSystem, beta: float, l: int, tgrid, k: int = 0, q: int = 0) -> float:
    """Max deviation between the fluctuation (Green-Kubo) form and ``Xi_p(t)_{kq}``."""
    gk = green_kubo(eig, beta, l, k, q, tgrid)
    direct = xi_p_l(eig, beta, l, tgrid)[:, k, q]
    return float(np.max(np.abs(gk - direct))) if len(gk) else 0.0


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------
@dataclass
class TransportKernel:
    tgrid: np.ndarray
    xi_p: np.ndarray                 # (T, d, d)
    xi_d: np.ndarray                 # (d, d)
    l: int
    beta: float
    lam: float
    n_realizations: int = 1
    xi_p_stderr: np.ndarray | None = None
    xi_d_stderr: np.ndarray | None = None
    samples_p: np.ndarray | None = field(default=None, repr=False)   # (N, T, d, d)
    samples_d: np.ndarray | None = field(default=None, repr=False)   # (N, d, d)
    provenance: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.xi_d.shape[0]

    def long_rows(self):
        """Rows ``(t, k, q, xi_p, stderr)`` in long format."""
        rows = []
        for i, t in enumerate(self.tgrid):
            for k in range(self.d):
                for q in range(self.d):
                    se = float(self.xi_p_stderr[i, k, q]) if self.xi_p_stderr is not None else 0.0
                    rows.append((float(t), k, q, float(self.xi_p[i, k, q]), se))
        return rows


def realization_kernel(spec: DisorderSpec, beta: float, d: int, l: int, index: int, tgrid,
                       pad: int = 2, mu: float = 0.0, window: str = "forward") -> TransportKernel:
    """Kernel of one realization on the ambient box of half-side ``l + pad``."""
    box = build_box(d, l + max(pad, 1))
    real = sample_realization(spec, box, index)
    eig = diagonalize(hamiltonian(box, real, spec, mu=mu))
    sym = fermi_symbol(eig, beta)
    return TransportKernel(np.asarray(tgrid, dtype=float), xi_p_l(eig, beta, l, tgrid, window),
                           xi_d_l(sym, l, box), l, beta, spec.lam,
                           provenance={"seed": spec.master_seed, "realization": index, "ambient_l": box.l,
                                       "window": window})


def ensemble_kernel(spec: DisorderSpec, beta: float, d: int, l: int, N: int, tgrid,
                    pad: int = 2, workers: int = 1, window: str = "forward") -> TransportKernel:
    if N < 2:
        raise ContractError("ensemble needs N >= 2")
    ks = map_realizations(lambda i: realization_kernel(spec, beta, d, l, i, tgrid, pad, window=window),
                          N, workers)
    sp = np.stack([k.xi_p for k in ks])
    sd = np.stack([k.xi_d for k in ks])
    mp, ep = ensemble_stats(sp)
    md, ed = ensemble_stats(sd)
    return TransportKernel(np.asarray(tgrid, dtype=float), mp, md, l, beta, spec.lam, N, ep, ed, sp, sd,
                           provenance={"seed": spec.master_seed, "N": N, "ambient_l": l + max(pad, 1),
                                       "window": window})


def macro_transport(spec: DisorderSpec, beta: float, l_list: Sequence[int], N: int, tgrid,
                    d: int = 1, pad: int = 2, workers: int = 1):
    """Ensemble kernels for each ``l`` plus a convergence table.

    Table rows: ``l, max|E Xi_p|, E Xi_d[0,0], stderr Xi_d[0,0], cauchy_p,
    cauchy_d, max per-realization deviation of Xi_d``.  The macroscopic value
    is reported as the largest-``l`` mean with uncertainty
    ``stderr + last Cauchy difference``.
    """
    kernels, table = [], []
    prev = None
    for l in l_list:
        ker = ensemble_kernel(spec, beta, d, l, N, tgrid, pad, workers)
        cp = float(np.max(np.abs(ker.xi_p - prev.xi_p))) if prev is not None else math.nan
        cd = float(np.max(np.abs(ker.xi_d - prev.xi_d))) if prev is not None else math.nan
        dev = float(np.max(np.abs(ker.samples_d - ker.xi_d)))
        table.append({"l": l, "xi_p_maxabs": float(np.max(np.abs(ker.xi_p))),
                      "xi_d_00": float(ker.xi_d[0, 0]), "xi_d_00_stderr": float(ker.xi_d_stderr[0, 0]),
                      "cauchy_p": cp, "cauchy_d": cd, "xi_d_max_realization_dev": dev})
        kernels.append(ker)
        prev = ker
    last = kernels[-1]
    unc = float(last.xi_d_stderr[0, 0]) + (0.0 if len(kernels) < 2 else table[-1]["cauchy_d"])
    return kernels, table, {"xi_d_00": float(last.xi_d[0, 0]), "uncertainty": unc}


def field_response_kernel(eig: EigenSystem, beta: float, l: int, vp, tgrid) -> TransportKernel:
    """Exact finite-volume response of the ``Lambda_l``-averaged currents to ``vp``.

    To first order the driven Hamiltonian is ``H + eta * P(t) * sum_q w_q J_q^psi``
    with ``J_q^psi = sum_x g_x I_(x+e_q, x)`` and ``g_x`` the segment average
    of the spatial profile.  Column ``q`` of ``xi_p`` is the commutator kernel
    of the measured ``J_k`` against ``J_q^psi``; ``xi_d`` holds the matching
    profile-weighted diamagnetic average.  ``J_p/eta -> int (xi_p(t-s) w) E(s) ds``
    and ``J_d/eta -> (xi_d w) P(t)`` hold exactly at linear order.
    """
    box = eig.box
    vol = (2 * l + 1) ** box.d
    measured = [averaged_current_matrix(box, l, k) for k in range(box.d)]
    fields = []
    for q in range(box.d):
        e = np.zeros(box.d, dtype=np.int64)
        e[q] = 1
        tails = box.sites[box.contains(box.sites + e)]
        g = vp.bond_profile(tails, tails + e)
        fields.append(weighted_current_matrix(box, tails[g != 0], q, g[g != 0]))
    xi = commutator_kernel(eig, beta, measured, fields, tgrid, norm=vol)
    sym = fermi_symbol(eig, beta)
    sites = averaging_sites(box, l)
    xd = np.zeros((box.d, box.d))
    for k in range(box.d):
        e = np.zeros(box.d, dtype=np.int64)
        e[k] = 1
        g = vp.bond_profile(sites, sites + e)
        xd[k, k] = 2.0 * np.sum(g * sym.entries[box.indices(sites + e), box.indices(sites)].real) / vol
    return TransportKernel(np.asarray(tgrid, dtype=float), xi, xd, l, beta, float("nan"),
                           provenance={"kind": "field-weighted"})


def conductivity(kernel: TransportKernel) -> dict:
    """Conductivity ``Sigma(t)``, scalar parts and current viscosity on the kernel grid.

    ``Sigma(t) = 0`` for ``t < 0`` and ``Xi_d + Xi_p(t)`` for ``t >= 0``.
    ``V(t) = Xi_d^{-1} dXi_p/dt`` by central differences (even extension
    through ``t = 0``); ``None`` when ``Xi_d`` is singular.
    """
    t = kernel.tgrid
    sig = np.where((t >= 0)[:, None, None], kernel.xi_d[None] + kernel.xi_p, 0.0)
    d = kernel.d
    sig_p = np.trace(kernel.xi_p, axis1=1, axis2=2) / d
    sig_d = float(np.trace(kernel.xi_d) / d)
    visc = None
    if abs(np.linalg.det(kernel.xi_d)) >= 1e-12 and t.size >= 2:
        if t[0] == 0.0:
            ext_t = np.concatenate([-t[:0:-1], t])
            ext_x = np.concatenate([kernel.xi_p[:0:-1], kernel.xi_p])
            deriv = np.gradient(ext_x, ext_t, axis=0)[t.size - 1:]
        else:
            deriv = np.gradient(kernel.xi_p, t, axis=0)
        visc = np.einsum("kj,tjq->tkq", np.linalg.inv(kernel.xi_d), deriv)
    return {"tgrid": t, "sigma": sig, "sigma_p": sig_p, "sigma_d": sig_d,
            "sigma_scalar": np.where(t >= 0, sig_d + sig_p, 0.0), "viscosity": visc}

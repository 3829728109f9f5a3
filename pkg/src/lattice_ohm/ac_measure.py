"""Positive frequency measure of the in-phase paramagnetic conductivity.

For the averaged current ``J_k`` the finite-volume coefficient has the
cosine representation

    Xi_p(t)_{kk} = sum_{n != m} w_nm (cos(nu_nm t) - 1),
    w_nm = (f_n - f_m) / nu_nm * |<n|J_k|m>|^2 / |Lambda_l|,   nu_nm = e_m - e_n,

summed over ordered eigenpairs.  Each weight is nonnegative because the
Fermi function is decreasing, and ``w_nm = w_mn`` makes the measure even.
Pairs with ``nu = 0`` carry no weight.  The measure is stored both as exact
atoms (used for reconstruction) and binned (used for export and for
evaluating frequency integrals at bin centres).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CalibrationError, ContractError
from .lattice_fields import Pulse
from .onebody import EigenSystem, fermi_function
from .transport import DEGENERATE_REL, averaged_current_matrix, xi_p_l

RECONSTRUCTION_TOL = 1e-6


@dataclass
class SpectralMeasure:
    bins: np.ndarray               # ascending edges
    weights: np.ndarray            # mass per bin
    atoms_nu: np.ndarray
    atoms_w: np.ndarray
    zero_excluded: bool = True
    provenance: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bins[1:] + self.bins[:-1])

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def reconstruct(self, tgrid) -> np.ndarray:
        """``sum w (cos(nu t) - 1)`` over the exact atoms."""
        t = np.asarray(tgrid, dtype=float)
        return np.array([np.sum(self.atoms_w * (np.cos(self.atoms_nu * s) - 1.0)) for s in t])

    def rows(self):
        return [(float(c), float(w)) for c, w in zip(self.centers, self.weights)]


def measure_atoms(eig: EigenSystem, beta: float, l: int, k: int):
    """Frequencies and weights of one eigensystem (degenerate pairs dropped)."""
    box = eig.box
    vol = (2 * l + 1) ** box.d
    v = eig.eigenvectors
    jk = v.conj().T @ averaged_current_matrix(box, l, k) @ v
    f = fermi_function(eig.eigenvalues, beta)
    nu = eig.eigenvalues[None, :] - eig.eigenvalues[:, None]
    thr = DEGENERATE_REL * max(eig.norm_max, 1e-300)
    mask = (np.abs(nu) > thr) & (np.abs(jk) > 0)
    df = f[:, None] - f[None, :]
    w = df[mask] / nu[mask] * np.abs(jk[mask]) ** 2 / vol
    return nu[mask], w


def spectral_measure(eigs: Sequence[EigenSystem], beta: float, l: int, k: int = 0,
                     bin_width: float | None = None, tgrid=None, check: bool = True) -> SpectralMeasure:
    """Ensemble-averaged measure; verified against ``Xi_p`` by cosine reconstruction.

    Raises :class:`CalibrationError` if the reconstruction misses the direct
    coefficient by more than ``1e-6`` on ``tgrid``.
    """
    if bin_width is not None and not bin_width > 0:
        raise ContractError("bin_width must be positive")
    eigs = list(eigs)
    nus, ws = [], []
    for eig in eigs:
        nu, w = measure_atoms(eig, beta, l, k)
        nus.append(nu)
        ws.append(w / len(eigs))
    nu = np.concatenate(nus)
    w = np.concatenate(ws)
    if np.any(w < -1e-10):
        raise CalibrationError(f"negative spectral weight {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    if bin_width is None:
        lo = min(e.eigenvalues[0] for e in eigs)
        hi = max(e.eigenvalues[-1] for e in eigs)
        bin_width = max(hi - lo, 1e-12) / 400.0
    top = float(np.max(np.abs(nu))) if nu.size else bin_width
    m = int(math.ceil(top / bin_width + 0.5))
    edges = (np.arange(-m, m + 1) + 0.5) * bin_width
    edges = np.concatenate([[edges[0] - bin_width], edges])
    binned, _ = np.histogram(nu, bins=edges, weights=w)
    meas = SpectralMeasure(edges, binned, nu, w, True,
                           {"beta": beta, "l": l, "k": k, "N": len(eigs), "bin_width": bin_width})
    if check:
        tgrid = np.linspace(0.0, 10.0, 41) if tgrid is None else np.asarray(tgrid, dtype=float)
        direct = np.mean([xi_p_l(e, beta, l, tgrid)[:, k, k] for e in eigs], axis=0)
        resid = float(np.max(np.abs(meas.reconstruct(tgrid) - direct)))
        meas.provenance["reconstruction_residual"] = resid
        if resid > RECONSTRUCTION_TOL:
            raise CalibrationError(f"cosine reconstruction residual {resid:.3e} exceeds {RECONSTRUCTION_TOL}")
    return meas


def fourier_transform(pulse_vals: np.ndarray, tgrid: np.ndarray, nu) -> np.ndarray:
    """``int exp(i nu s) E(s) ds`` by the trapezoid rule (spectrally accurate for smooth pulses)."""
    tgrid = np.asarray(tgrid, dtype=float)
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    wts = np.full(tgrid.size, tgrid[1] - tgrid[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    out = np.empty(nu.size, dtype=complex)
    for lo in range(0, nu.size, 512):
        ph = np.exp(1j * np.outer(nu[lo:lo + 512], tgrid))
        out[lo:lo + 512] = ph @ (wts * pulse_vals)
    return out


def ac_form_check(measure: SpectralMeasure | None, sigma_lags: np.ndarray, pulse: Pulse, tgrid) -> dict:
    """Heat quadratic form evaluated in time and in frequency.

    ``lhs = 1/2 int int sigma_p(s1 - s2) E(s2) E(s1)`` over the full plane,
    with ``sigma_lags[j]`` the kernel at lag ``j*h`` on the uniform grid
    ``tgrid`` (which must cover the pulse support).  ``rhs = 1/2 int |E^(nu)|^2
    d mu(nu)`` with ``E^`` evaluated at bin centres.
    """
    if not pulse.ac:
        raise ContractError("the quadratic-form identity needs an AC pulse")
    tgrid = np.asarray(tgrid, dtype=float)
    steps = np.diff(tgrid)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise ContractError("time grid must be uniform")
    if tgrid[0] > pulse.t0 + 1e-12 or tgrid[-1] < pulse.t_end - 1e-12:
        raise ContractError("time grid must cover the pulse support")
    sigma_lags = np.asarray(sigma_lags, dtype=float)
    n = tgrid.size
    if sigma_lags.size < n:
        raise ContractError("kernel does not cover all lags of the grid")
    h = steps[0]
    e = pulse.values(tgrid)
    wts = np.full(n, h)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    ew = e * wts
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    lhs = 0.5 * float(ew @ sigma_lags[idx] @ ew)
    if measure is None:
        rhs = 0.0
    else:
        nz = measure.weights > 0
        rhs = 0.5 * float(np.sum(measure.weights[nz] * np.abs(fourier_transform(e, tgrid, measure.centers[nz])) ** 2))
    rel = abs(lhs - rhs) / max(abs(lhs), 1e-12)
    return {"lhs": lhs, "rhs": rhs, "relative_error": rel, "positivity": lhs >= -1e-8}

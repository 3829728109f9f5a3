"""Currents, linear response and the energy ledger of a driven run.

Observables are evaluated from the symbols ``d0`` (equilibrium) and
``d_t = U d0 U^dagger``:

* thermal current      ``J_th = <-2 Im d0[x+e_k, x]>``
* paramagnetic current ``J_p  = <-2 Im (d_t - d0)[x+e_k, x]>``
* diamagnetic current  ``J_d  = <-2 Im ((exp(i theta_x) - 1) d_t[x+e_k, x])>``

with ``<.>`` the average over ``x`` in ``Lambda_l`` and ``theta_x`` the line
integral of ``A`` from ``x`` to ``x+e_k`` -- the same phase that enters the
hopping term, so that ``I + I^A = -dH/d(theta)`` is the conserved current of
the driven Hamiltonian.

Energy increments (traces over a box ``Lambda_L``)::

    S  = tr[(d_t - d0) H0]        internal energy (heat)
    P  = tr[d_t W_t]              electromagnetic potential energy
    Ip = tr[(d_t - d0)(H0 + W_t)] paramagnetic increment
    Id = tr[d0 W_t]               diamagnetic increment

with ``W_t = Delta^{A(t)} - Delta``.  ``S + P = Ip + Id`` identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .disorder import DisorderSpec, Realization, sample_realization
from .dynamics import EvolutionRun, evolve, padded_half_side
from .errors import ContractError, GeometryError
from .lattice_fields import Box, Pulse, SpatialProfile, VectorPotential, build_box
from .onebody import Symbol, diagonalize, fermi_symbol, hamiltonian
from .transport import TransportKernel, averaging_sites


@dataclass
class CurrentReport:
    tgrid: np.ndarray
    J_th: np.ndarray      # (d,)
    J_p: np.ndarray       # (T, d)
    J_d: np.ndarray       # (T, d)
    trace_check_residual: float


@dataclass
class EnergyLedger:
    tgrid: np.ndarray
    S: np.ndarray
    P: np.ndarray
    Ip: np.ndarray
    Id: np.ndarray
    balance_residual: float
    normalization: float = 1.0
    provenance: dict = field(default_factory=dict)

    def densities(self) -> dict:
        n = self.normalization
        return {"s": self.S / n, "p": self.P / n, "ip": self.Ip / n, "id": self.Id / n}

    def normalized(self, eta: float, volume: int) -> "EnergyLedger":
        return EnergyLedger(self.tgrid, self.S, self.P, self.Ip, self.Id, self.balance_residual,
                            eta * eta * volume, dict(self.provenance))


def _bond_indices(box: Box, l: int, k: int):
    sites = averaging_sites(box, l)
    e = np.zeros(box.d, dtype=np.int64)
    e[k] = 1
    return box.indices(sites), box.indices(sites + e)


def thermal_current(d0: Symbol, box: Box, l: int) -> np.ndarray:
    """Equilibrium current density ``J_th`` over ``Lambda_l``, one entry per direction."""
    vol = (2 * l + 1) ** box.d
    out = np.zeros(box.d)
    for k in range(box.d):
        it, ih = _bond_indices(box, l, k)
        out[k] = -2.0 * d0.entries[ih, it].imag.sum() / vol
    return out


def current_densities(run: EvolutionRun, d0: Symbol, vp: VectorPotential | None, l: int,
                      tgrid: Sequence[float]) -> CurrentReport:
    box = run.box
    d = box.d
    vol = (2 * l + 1) ** d
    tgrid = np.asarray(tgrid, dtype=float)
    lookup = {(int(a), int(b)): j for j, (a, b) in enumerate(zip(run.hamiltonian.it, run.hamiltonian.ih))}
    idx = [_bond_indices(box, l, k) for k in range(d)]
    pos = [np.array([lookup[(int(a), int(b))] for a, b in zip(it, ih)]) for it, ih in idx]
    jth = thermal_current(d0, box, l)
    jp = np.zeros((tgrid.size, d))
    jd = np.zeros((tgrid.size, d))
    resid = 0.0
    # sites of Lambda_l together with their e_k neighbours: the direction-k bonds inside
    # this set are exactly the bonds (x, x+e_k) with x in Lambda_l
    windows = []
    for k, (it, ih) in enumerate(idx):
        sub = np.union1d(it, ih)
        windows.append((sub, box.sites[sub, k].astype(float)))
    for i, t in enumerate(tgrid):
        u = run.unitary(t)
        dt = u @ d0.entries @ u.conj().T
        theta = run.hamiltonian.line_integrals(t)
        h_full = run.hamiltonian.matrix(t)
        tr = np.zeros(d)
        for k, (it, ih) in enumerate(idx):
            delta = (dt - d0.entries)[ih, it]
            jp[i, k] = -2.0 * delta.imag.sum() / vol
            ph = np.exp(1j * theta[pos[k]]) - 1.0
            jd[i, k] = -2.0 * (ph * dt[ih, it]).imag.sum() / vol
            # velocity-operator trace: -tr[d_t P i[H_A, X_k] P] / |Lambda_l|
            sub, xk = windows[k]
            h = h_full[np.ix_(sub, sub)]
            vel = 1j * (h * (xk[None, :] - xk[:, None]))
            tr[k] = -np.trace(dt[np.ix_(sub, sub)] @ vel).real / vol
        resid = max(resid, float(np.max(np.abs(tr - (jth + jp[i] + jd[i])))))
    return CurrentReport(tgrid, jth, jp, jd, resid)


def _direction_response(kernel_values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``w^T K(t) w`` for a stack of matrices."""
    return np.einsum("k,tkq,q->t", w, kernel_values, w)


def _lag_convolution(lag_kernel: np.ndarray, pulse_vals: np.ndarray, h: float) -> np.ndarray:
    """``J(t_i) = int_{t_0}^{t_i} K(t_i - s) E(s) ds`` by the trapezoid rule on a uniform grid."""
    n = pulse_vals.size
    out = np.zeros(n)
    for i in range(1, n):
        integrand = lag_kernel[i::-1] * pulse_vals[: i + 1]
        out[i] = h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1]))
    return out


def _uniform_step(tgrid: np.ndarray) -> float:
    if tgrid.size < 2:
        return 0.0
    steps = np.diff(tgrid)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
        raise ContractError("time grid must be uniform")
    return float(steps[0])


def linear_response_current(kernel: TransportKernel, pulse: Pulse, w, tgrid) -> dict:
    """``J_lin(t) = int_{t0}^t (Sigma(t-s) w) E(s) ds`` split into its two parts.

    ``tgrid`` must be uniform and start at the pulse onset; the kernel must
    provide ``Xi_p`` at the lags ``tgrid - tgrid[0]``.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    w = np.asarray(w, dtype=float)
    h = _uniform_step(tgrid)
    lags = tgrid - tgrid[0]
    if kernel.tgrid.size < lags.size or np.max(np.abs(kernel.tgrid[: lags.size] - lags)) > 1e-9:
        raise ContractError("kernel grid does not cover the needed lags")
    e = pulse.values(tgrid)
    xi = kernel.xi_p[: lags.size]
    para = np.stack([_lag_convolution(xi[:, k, :] @ w, e, h) for k in range(w.size)], axis=1)
    dia = np.outer(pulse.primitive(tgrid), kernel.xi_d @ w)
    return {"tgrid": tgrid, "para": para, "dia": dia, "total": para + dia}


def energy_increments(run: EvolutionRun, d0: Symbol, spec: DisorderSpec | None, vp: VectorPotential | None,
                      tgrid: Sequence[float], L_trace: int | None = None) -> EnergyLedger:
    box = run.box
    L = box.l if L_trace is None else int(L_trace)
    if L > box.l:
        raise GeometryError(f"trace box L={L} exceeds the evolution box l={box.l}")
    if vp is not None and L < math.ceil(vp.scale * vp.profile.support_radius) + 1:
        raise ContractError("trace box does not contain the field support plus a bond")
    sub = box.indices(build_box(box.d, L).sites)
    h0 = run.hamiltonian.static[np.ix_(sub, sub)]
    d0s = d0.entries[np.ix_(sub, sub)]
    tgrid = np.asarray(tgrid, dtype=float)
    out = np.zeros((4, tgrid.size))
    for i, t in enumerate(tgrid):
        u = run.unitary(t)
        dt = (u @ d0.entries @ u.conj().T)[np.ix_(sub, sub)]
        wt = run.hamiltonian.hopping_perturbation(t)[np.ix_(sub, sub)]
        dd = dt - d0s
        # tr[X Y] = sum_ij X_ij Y_ji
        S = np.einsum("ij,ji->", dd, h0).real
        P = np.einsum("ij,ji->", dt, wt).real
        Ip = np.einsum("ij,ji->", dd, h0 + wt).real
        Id = np.einsum("ij,ji->", d0s, wt).real
        out[:, i] = S, P, Ip, Id
    S, P, Ip, Id = out
    bal = float(np.max(np.abs(S + P - Ip - Id))) if tgrid.size else 0.0
    return EnergyLedger(tgrid, S, P, Ip, Id, bal, 1.0, {"L_trace": L})


def spatial_factor(profile: SpatialProfile, l: float, volume: int) -> float:
    """``int psi(x/l)^2 d^dx / |Lambda_l|``."""
    return profile.normalization * l ** profile.d / volume


def joule_predictions(kernel: TransportKernel, vp: VectorPotential, tgrid, factor: float | None = None) -> dict:
    """Linear-response energy densities from a transport kernel.

    ``factor`` is the spatial weight multiplying the temporal double
    integrals; by default ``int psi(x/l)^2 d^dx / |Lambda_l|`` with ``l`` the
    field scale.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    w = vp.direction
    if factor is None:
        factor = spatial_factor(vp.profile, vp.scale, (2 * int(round(vp.scale)) + 1) ** vp.d)
    h = _uniform_step(tgrid)
    lags = tgrid - tgrid[0]
    if kernel.tgrid.size < lags.size or np.max(np.abs(kernel.tgrid[: lags.size] - lags)) > 1e-9:
        raise ContractError("kernel grid does not cover the needed lags")
    e = vp.pulse.values(tgrid)
    prim = vp.pulse.primitive(tgrid)
    sig_p = _direction_response(kernel.xi_p[: lags.size], w)
    sig_d = float(w @ kernel.xi_d @ w)
    jw = _lag_convolution(sig_p, e, h)                      # J_p(t) . w / eta
    ip = factor * cumulative_trapezoid(e * jw, tgrid, initial=0.0)
    idd = factor * sig_d * 0.5 * prim ** 2
    cross = factor * prim * jw
    s = ip - cross
    p = idd + cross
    # produced heat with the scalar conductivity sigma = sigma_d + sigma_p
    d = vp.d
    sig_scalar_p = np.trace(kernel.xi_p[: lags.size], axis1=1, axis2=2) / d
    q_p = factor * cumulative_trapezoid(e * _lag_convolution(sig_scalar_p, e, h), tgrid, initial=0.0)
    q = q_p + factor * float(np.trace(kernel.xi_d) / d) * 0.5 * prim ** 2
    return {"tgrid": tgrid, "ip": ip, "id": idd, "s": s, "p": p, "E_lin": ip + idd, "Q": q,
            "factor": factor}


# ---------------------------------------------------------------------------
# driven runs and sweeps
# ---------------------------------------------------------------------------
@dataclass
class DrivenRun:
    run: EvolutionRun
    d0: Symbol
    vp: VectorPotential
    realization: Realization
    ledger: EnergyLedger
    currents: CurrentReport | None


def driven_run(spec: DisorderSpec, beta: float, index: int, vp: VectorPotential, tgrid, dt: float,
               l_avg: int | None = None, half_side: int | None = None, currents: bool = True,
               mu: float = 0.0) -> DrivenRun:
    """Evolve the equilibrium state of one realization under ``vp`` and record everything."""
    tgrid = np.asarray(tgrid, dtype=float)
    d = vp.d
    t0, t_end = float(tgrid[0]), float(tgrid[-1])
    L = half_side if half_side is not None else padded_half_side(
        vp.scale, vp.profile.support_radius, t_end - t0, d)
    box = build_box(d, L)
    real = sample_realization(spec, box, index)
    eig = diagonalize(hamiltonian(box, real, spec, mu=mu))
    d0 = fermi_symbol(eig, beta)
    run = evolve(box, real, spec, vp, t0, t_end, dt, tgrid, mu=mu)
    ledger = energy_increments(run, d0, spec, vp, tgrid)
    rep = None
    if currents:
        l_avg = int(round(vp.scale)) if l_avg is None else l_avg
        rep = current_densities(run, d0, vp, l_avg, tgrid)
    return DrivenRun(run, d0, vp, real, ledger, rep)


def energy_densities(spec: DisorderSpec, beta: float, index: int, pulse: Pulse, profile: SpatialProfile,
                     direction, eta_list: Sequence[float], l_list: Sequence[int], tgrid, dt: float) -> dict:
    """Normalized ledgers over an ``(eta, l)`` sweep and the eta-convergence slope per ``l``."""
    if any(b >= a for a, b in zip(eta_list, eta_list[1:])):
        raise ContractError("eta_list must be decreasing")
    if any(b <= a for a, b in zip(l_list, l_list[1:])):
        raise ContractError("l_list must be increasing")
    cells = {}
    for l in l_list:
        for eta in eta_list:
            vp = VectorPotential(pulse, profile, direction, float(l), float(eta))
            dr = driven_run(spec, beta, index, vp, tgrid, dt, currents=False)
            cells[(eta, l)] = dr.ledger.normalized(eta, (2 * l + 1) ** profile.d)
    slopes = {}
    for l in l_list:
        diffs = []
        for a, b in zip(eta_list, eta_list[1:]):
            da = cells[(a, l)].densities()
            db = cells[(b, l)].densities()
            diffs.append(max(float(np.max(np.abs(da[key] - db[key]))) for key in da))
        if len(diffs) >= 2 and min(diffs) > 0:
            slopes[l] = float(np.polyfit(np.log(eta_list[:-1]), np.log(diffs), 1)[0])
        else:
            slopes[l] = math.nan
    return {"cells": cells, "eta_slopes": slopes}

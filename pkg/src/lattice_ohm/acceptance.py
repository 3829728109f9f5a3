"""The acceptance battery: twelve property checks at desk scale.

Each ``criterion_N`` builds its own small experiment from fixed seeds,
evaluates the property at its stated tolerance and returns a
:class:`CriterionResult`.  ``run_all`` runs the whole battery; the CLI
``suite`` command and the test suite both go through it.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .ac_measure import ac_form_check, spectral_measure
from .correlations import (CurrentElement, correlation_matrix, fluctuation_inner, two_point,
                           wick_truncated)
from .disorder import (DisorderSpec, ensemble_stats, loglog_slope, map_realizations,
                       sample_realization, self_averaging_diagnostic)
from .dynamics import evolve, padded_half_side
from .energetics import (driven_run, joule_predictions, linear_response_current,
                         thermal_current)
from .lattice_fields import Pulse, SpatialProfile, VectorPotential, build_box
from .onebody import diagonalize, fermi_symbol, hamiltonian
from .transport import ensemble_kernel, field_response_kernel, green_kubo_check, xi_d_l, xi_p_l


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items() if not isinstance(v, (list, dict)))
        return f"[{tag}] criterion {self.number:2d} {self.title}: {shown}"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": bool(self.passed),
                "seconds": self.seconds, "metrics": _jsonable(self.metrics)}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _eig(spec: DisorderSpec, d: int, half_side: int, index: int):
    box = build_box(d, half_side)
    real = sample_realization(spec, box, index)
    return diagonalize(hamiltonian(box, real, spec))


# ---------------------------------------------------------------------------
# 1-2  transport structure and isotropy
# ---------------------------------------------------------------------------
GRID_PARAMS = [(d, lam, beta) for d in (1, 2) for lam in (0.0, 0.5, 1.0) for beta in (0.5, 2.0)]
STRUCT_TGRID = np.linspace(0.0, 5.0, 26)


def criterion_1(workers: int = 1) -> CriterionResult:
    """Xi_p(0) = 0, symmetry, negative semidefiniteness and the range of Xi_d."""
    worst = {"xi_p_zero": 0.0, "symmetry": 0.0, "max_eig": -math.inf, "xi_d_absmax": 0.0}
    for d, lam, beta in GRID_PARAMS:
        ker = ensemble_kernel(DisorderSpec(lam=lam, master_seed=101), beta, d, 6, 20, STRUCT_TGRID,
                              pad=2, workers=workers)
        sp = ker.samples_p
        worst["xi_p_zero"] = max(worst["xi_p_zero"], float(np.abs(sp[:, 0]).max()))
        worst["symmetry"] = max(worst["symmetry"], float(np.abs(sp - sp.transpose(0, 1, 3, 2)).max()))
        sym = 0.5 * (sp + sp.transpose(0, 1, 3, 2))
        worst["max_eig"] = max(worst["max_eig"], float(np.linalg.eigvalsh(sym).max()))
        worst["xi_d_absmax"] = max(worst["xi_d_absmax"], float(np.abs(ker.samples_d).max()))
    ok = (worst["xi_p_zero"] <= 1e-12 and worst["symmetry"] <= 1e-10 and worst["max_eig"] <= 1e-8
          and worst["xi_d_absmax"] <= 2.0)
    return CriterionResult(1, "transport structure", ok, worst)


ISOTROPY_FLOOR = 1e-12


def criterion_2(workers: int = 1) -> CriterionResult:
    """Off-diagonals and diagonal spread of the ensemble mean within 3 standard errors.

    Uses the reflection-covariant (centred) averaging window; the forward
    window carries a deterministic O(1/l) off-diagonal boundary term.
    """
    worst_off, worst_diag = 0.0, 0.0
    for d, lam, beta in GRID_PARAMS:
        if d < 2:
            continue
        ker = ensemble_kernel(DisorderSpec(lam=lam, master_seed=202), beta, d, 6, 20, STRUCT_TGRID,
                              pad=2, workers=workers, window="centred")
        se = ker.xi_p_stderr
        for k in range(d):
            for q in range(d):
                if k != q:
                    r = np.abs(ker.xi_p[:, k, q]) / (3 * se[:, k, q] + ISOTROPY_FLOOR)
                    worst_off = max(worst_off, float(r.max()))
        for k in range(1, d):
            spread = np.abs(ker.xi_p[:, k, k] - ker.xi_p[:, 0, 0])
            se2 = np.sqrt(se[:, k, k] ** 2 + se[:, 0, 0] ** 2)
            worst_diag = max(worst_diag, float((spread / (3 * se2 + ISOTROPY_FLOOR)).max()))
    ok = worst_off <= 1.0 and worst_diag <= 1.0
    return CriterionResult(2, "isotropy", ok, {"offdiag_over_3se": worst_off, "diag_spread_over_3se": worst_diag})


# ---------------------------------------------------------------------------
# 3  Green-Kubo
# ---------------------------------------------------------------------------
def criterion_3(workers: int = 1) -> CriterionResult:
    spec = DisorderSpec(lam=1.0, master_seed=303)
    tgrid = np.linspace(0.0, 5.0, 51)
    res = map_realizations(lambda i: green_kubo_check(_eig(spec, 1, 6, i), 1.0, 4, tgrid), 10, workers)
    worst = float(max(res))
    return CriterionResult(3, "Green-Kubo equivalence", worst <= 1e-7, {"max_residual": worst, "realizations": 10})


# ---------------------------------------------------------------------------
# 4-6  driven runs
# ---------------------------------------------------------------------------
OHM_ETAS = (1e-1, 1e-2, 1e-3)
OHM_L = 4
OHM_TGRID = np.linspace(0.0, 4.0, 201)
OHM_DT = 2e-3


@lru_cache(maxsize=None)
def _ohm_runs(pulse_key: str):
    spec = DisorderSpec(lam=1.0, master_seed=404)
    if pulse_key == "bump_derivative":
        pulse = Pulse.bump_derivative(0.0, 2.0)
    else:
        pulse = Pulse.random_ac(np.random.default_rng(404), 0.0, 2.0)
    prof = SpatialProfile("indicator", 1)
    L = padded_half_side(OHM_L, prof.support_radius, OHM_TGRID[-1] - OHM_TGRID[0], 1)
    vp1 = VectorPotential(pulse, prof, [1.0], OHM_L, 1.0)
    runs = {eta: driven_run(spec, 1.0, 0, vp1.with_eta(eta), OHM_TGRID, OHM_DT, l_avg=OHM_L, half_side=L)
            for eta in OHM_ETAS}
    return spec, vp1, L, runs


def criterion_4(workers: int = 1) -> CriterionResult:
    spec, vp1, L, runs = _ohm_runs("bump_derivative")
    eig = diagonalize(hamiltonian(runs[OHM_ETAS[0]].run.box, runs[OHM_ETAS[0]].realization, spec))
    ker = field_response_kernel(eig, 1.0, OHM_L, vp1, OHM_TGRID)
    lin = linear_response_current(ker, vp1.pulse, vp1.direction, OHM_TGRID)
    ep, ed = [], []
    for eta in OHM_ETAS:
        c = runs[eta].currents
        ep.append(float(np.abs(c.J_p / eta - lin["para"]).max()))
        ed.append(float(np.abs(c.J_d / eta - lin["dia"]).max()))
    sp, sd = loglog_slope(OHM_ETAS, ep), loglog_slope(OHM_ETAS, ed)
    ok = abs(sp - 1.0) <= 0.3 and abs(sd - 1.0) <= 0.3
    return CriterionResult(4, "Ohm linearity", ok, {"slope_para": sp, "slope_dia": sd,
                                                     "err_para": ep, "err_dia": ed})


def criterion_5(workers: int = 1) -> CriterionResult:
    """Balance on raw and normalized increments; positivity of the raw internal energy increment.

    Positivity is judged on the raw trace: dividing by ``eta^2 |Lambda_l|``
    magnifies its ~1e-13 rounding floor by ~1e5 at the smallest ``eta``.
    """
    bal, smin = 0.0, math.inf
    for key in ("bump_derivative", "random_ac"):
        _, vp1, _, runs = _ohm_runs(key)
        for eta, dr in runs.items():
            led = dr.ledger
            bal = max(bal, led.balance_residual)
            smin = min(smin, float(led.S.min()))
            dens = led.normalized(eta, (2 * OHM_L + 1)).densities()
            bal = max(bal, float(np.abs(dens["s"] + dens["p"] - dens["ip"] - dens["id"]).max()))
    # a two-dimensional run with a non-AC pulse and a smooth profile
    spec = DisorderSpec(lam=0.5, master_seed=505)
    vp = VectorPotential(Pulse.bump(0.0, 1.0), SpatialProfile("bump", 2), [1.0, 0.5], 4.0, 0.05)
    dr = driven_run(spec, 2.0, 0, vp, np.linspace(0.0, 1.5, 31), 5e-3, half_side=6, currents=False)
    bal = max(bal, dr.ledger.balance_residual)
    smin = min(smin, float(dr.ledger.S.min()))
    ok = bal <= 1e-8 and smin >= -1e-10
    return CriterionResult(5, "energy balance and positivity", ok, {"balance_residual": bal, "S_min": smin})


def criterion_6(workers: int = 1) -> CriterionResult:
    eta = min(OHM_ETAS)
    worst_pd, worst_eq, ip_min, t1s = 0.0, 0.0, math.inf, []
    for key in ("bump_derivative", "random_ac"):
        _, vp1, _, runs = _ohm_runs(key)
        dens = runs[eta].ledger.normalized(eta, 2 * OHM_L + 1).densities()
        after = OHM_TGRID >= vp1.t1
        t1s.append(vp1.t1)
        e_lin = dens["ip"] + dens["id"]
        worst_pd = max(worst_pd, float(np.abs(dens["id"][after]).max()), float(np.abs(dens["p"][after]).max()))
        worst_eq = max(worst_eq, float(np.abs(e_lin[after] - dens["s"][after]).max()),
                       float(np.abs(dens["s"][after] - dens["ip"][after]).max()))
        ip_min = min(ip_min, float(dens["ip"][after].min()))
    ok = worst_pd <= 1e-6 and worst_eq <= 1e-6 and ip_min >= -1e-10
    return CriterionResult(6, "Joule AC endgame", ok, {"max_abs_id_p": worst_pd, "max_equality_gap": worst_eq,
                                                       "ip_min": ip_min, "t1": t1s})


# ---------------------------------------------------------------------------
# 7  Joule quantitative
# ---------------------------------------------------------------------------
def joule_error(l: int, N: int = 40, workers: int = 1, eta: float = 1e-3) -> float:
    """Relative sup-error of the ensemble-mean paramagnetic energy against the kernel prediction."""
    spec = DisorderSpec(lam=1.0, master_seed=707)
    prof = SpatialProfile("indicator", 1)
    tgrid = np.linspace(0.0, 4.0, 401)
    L = padded_half_side(l, prof.support_radius, tgrid[-1] - tgrid[0], 1)
    ker = ensemble_kernel(spec, 1.0, 1, l, N, tgrid, pad=L - l, workers=workers)
    vp = VectorPotential(Pulse.bump_derivative(0.0, 2.0), prof, [1.0], l, eta)
    pred = joule_predictions(ker, vp, tgrid)["ip"]
    meas = np.mean(map_realizations(
        lambda i: driven_run(spec, 1.0, i, vp, tgrid, 2e-3, half_side=L, currents=False)
        .ledger.normalized(eta, 2 * l + 1).densities()["ip"], N, workers), axis=0)
    return float(np.abs(meas - pred).max() / np.abs(pred).max())


def criterion_7(workers: int = 1) -> CriterionResult:
    e8, e16 = joule_error(8, workers=workers), joule_error(16, workers=workers)
    ok = e8 <= 0.10 and e16 / e8 <= 0.7
    return CriterionResult(7, "Joule quantitative", ok, {"rel_err_l8": e8, "rel_err_l16": e16, "ratio": e16 / e8})


# ---------------------------------------------------------------------------
# 8  AC measure
# ---------------------------------------------------------------------------
AC_BIN_WIDTH = 0.002


def criterion_8(workers: int = 1) -> CriterionResult:
    spec = DisorderSpec(lam=1.0, master_seed=808)
    l = 6
    eigs = map_realizations(lambda i: _eig(spec, 1, l + 2, i), 5, workers)
    tgrid = np.linspace(0.0, 3.0, 601)
    meas = spectral_measure(eigs, 1.0, l, 0, AC_BIN_WIDTH, tgrid=tgrid)
    sig = np.mean([xi_p_l(e, 1.0, l, tgrid)[:, 0, 0] for e in eigs], axis=0)
    rng = np.random.default_rng(808)
    checks = [ac_form_check(meas, sig, Pulse.random_ac(rng, 0.0, 3.0), tgrid) for _ in range(3)]
    m = {"min_weight": float(meas.atoms_w.min()),
         "reconstruction_residual": meas.provenance["reconstruction_residual"],
         "max_dual_rel_error": max(c["relative_error"] for c in checks),
         "min_lhs": min(c["lhs"] for c in checks)}
    ok = (m["min_weight"] >= -1e-10 and m["reconstruction_residual"] <= 1e-6
          and m["max_dual_rel_error"] <= 1e-3 and m["min_lhs"] >= -1e-8)
    return CriterionResult(8, "AC measure", ok, m)


# ---------------------------------------------------------------------------
# 9-10  thermal currents and self-averaging
# ---------------------------------------------------------------------------
def criterion_9(workers: int = 1) -> CriterionResult:
    """Equilibrium currents: ensemble mean within 3 standard errors; median non-increasing in l.

    The Hamiltonian is real, so every thermal bond current vanishes
    identically; the median therefore cannot decrease strictly.
    """
    spec = DisorderSpec(lam=1.0, master_seed=909)
    medians, worst = [], 0.0
    for l in (4, 8, 12):
        def one(i, l=l):
            box = build_box(1, l + 2)
            eig = diagonalize(hamiltonian(box, sample_realization(spec, box, i), spec))
            return thermal_current(fermi_symbol(eig, 1.0), box, l)
        vals = np.array(map_realizations(one, 20, workers))
        mean, se = ensemble_stats(vals)
        worst = max(worst, float(np.max(np.abs(mean) - 3 * se)))
        medians.append(float(np.median(np.abs(vals))))
    mono = all(b <= a for a, b in zip(medians, medians[1:]))
    return CriterionResult(9, "thermal currents vanish", worst <= 0.0 and mono,
                           {"max_mean_minus_3se": worst, "medians": medians, "median_non_increasing": mono})


def criterion_10(workers: int = 1) -> CriterionResult:
    slopes = {}
    for d, ls in ((1, [8, 16, 32, 64, 128, 256]), (2, [2, 3, 4, 5, 6, 7])):
        spec = DisorderSpec(lam=1.0, master_seed=1010)
        for k in range(d):
            def obs(real, box, k=k):
                big = build_box(box.d, box.l + 2)
                r = sample_realization(spec, big, real.index)
                eig = diagonalize(hamiltonian(big, r, spec))
                return xi_d_l(fermi_symbol(eig, 1.0), box.l, big)[k, k]
            _, s = self_averaging_diagnostic(obs, spec, ls, 50, d=d, workers=workers)
            slopes[f"d{d}_k{k}"] = s
    ok = all(abs(s + 1.0) <= 0.3 for s in slopes.values())
    return CriterionResult(10, "ergodic self-averaging", ok, slopes)


# ---------------------------------------------------------------------------
# 11  numerics
# ---------------------------------------------------------------------------
def _relative_change(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.abs(b).max())
    diff = float(np.abs(a - b).max())
    return diff / scale if scale > 0 else diff


def criterion_11(workers: int = 1) -> CriterionResult:
    spec = DisorderSpec(lam=1.0, master_seed=1111)
    m: dict = {}
    # drift over the Ohm runs
    _, _, _, runs = _ohm_runs("bump_derivative")
    m["drift"] = max(dr.run.drift for dr in runs.values())
    # self-convergence order of the midpoint exponential stepper
    orders = []
    for d, l in ((1, 4), (2, 2)):
        box = build_box(d, 6)
        real = sample_realization(spec, box, 0)
        vp = VectorPotential(Pulse.bump_derivative(0.0, 1.0, 3.0), SpatialProfile("indicator", d),
                             [1.0] * d, l, 0.5)
        us = [evolve(box, real, spec, vp, 0.0, 1.0, dt).unitaries[-1] for dt in (0.02, 0.01, 0.005)]
        orders.append(math.log2(np.abs(us[0] - us[1]).max() / np.abs(us[1] - us[2]).max()))
    m["order"] = orders
    # box doubling
    tgrid = np.linspace(0.0, 3.0, 61)
    vp = VectorPotential(Pulse.bump_derivative(0.0, 2.0), SpatialProfile("indicator", 1), [1.0], 4, 0.01)
    L = padded_half_side(4, 1.0, 3.0, 1)
    outs = []
    for half in (L, 2 * L):
        dr = driven_run(spec, 1.0, 0, vp, tgrid, 2e-3, l_avg=4, half_side=half)
        dens = dr.ledger.normalized(0.01, 9).densities()
        dens["J_p"] = dr.currents.J_p
        dens["J_d"] = dr.currents.J_d
        outs.append(dens)
    m["box_doubling_change"] = max(_relative_change(outs[0][k], outs[1][k]) for k in outs[0])
    # fluctuation form: positivity and the Wick oracle at l = 0
    rng = np.random.default_rng(1111)
    eig = _eig(spec, 1, 6, 0)
    elems = [CurrentElement.bond((0,), (1,)), CurrentElement.bond((1,), (0,)),
             CurrentElement.general({(0,): 1.0, (1,): -0.5}, {(1,): 2.0, (-1,): 0.3})]
    for _ in range(3):
        elems.append(CurrentElement.general({(int(x),): float(rng.normal()) for x in rng.integers(-2, 3, 3)},
                                            {(int(x),): float(rng.normal()) for x in rng.integers(-2, 3, 3)}))
    pos = min(fluctuation_inner(eig, 1.0, l, e, e).real for e in elems for l in (0, 1, 2))
    sym = fermi_symbol(eig, 1.0).entries
    wick = max(abs(fluctuation_inner(eig, 1.0, 0, a, b) - wick_truncated(sym, a.matrix(eig.box), b.matrix(eig.box)))
               for a in elems for b in elems)
    m["fluctuation_min"] = float(pos)
    m["wick_residual"] = float(wick)
    ok = (m["drift"] <= 1e-8 and all(abs(o - 2.0) <= 0.2 for o in orders)
          and m["box_doubling_change"] <= 0.01 and pos >= -1e-12 and wick <= 1e-10)
    return CriterionResult(11, "numerics", ok, m)


# ---------------------------------------------------------------------------
# 12  KMS edge identity
# ---------------------------------------------------------------------------
def criterion_12(workers: int = 1) -> CriterionResult:
    worst = 0.0
    for d, half, lam, beta in ((1, 8, 1.0, 1.0), (2, 3, 0.5, 2.0)):
        spec = DisorderSpec(lam=lam, master_seed=1212)
        eig = _eig(spec, d, half, 0)
        box = eig.box
        for x in box.sites:
            s = two_point(eig, beta, 0.0, 0.0, (x, x)) + two_point(eig, beta, 0.0, beta, (x, x))
            worst = max(worst, abs(s - 1.0))
        full = correlation_matrix(eig, beta, 0.0, 0.0) + correlation_matrix(eig, beta, 0.0, beta)
        worst = max(worst, float(np.abs(full - np.eye(box.n)).max()))
    return CriterionResult(12, "KMS edge identity", worst <= 1e-10, {"max_residual": worst})


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run_criterion(n: int, workers: int = 1) -> CriterionResult:
    start = time.perf_counter()
    res = CRITERIA[n](workers=workers)
    res.seconds = time.perf_counter() - start
    return res


def run_all(workers: int = 1, only=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for n in sorted(CRITERIA):
        if only is not None and n not in only:
            continue
        res = run_criterion(n, workers)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out

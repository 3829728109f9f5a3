"""Config-driven experiments behind ``lattice-ohm run``.

Each scenario takes a resolved configuration (see :mod:`lattice_ohm.config`)
and returns a :class:`ScenarioResult`: scalar metrics, named pass/fail
checks against the configured tolerances, tables (with provenance columns)
and figure builders.  Nothing here touches the filesystem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import plotting
from .ac_measure import ac_form_check, spectral_measure
from .correlations import decay_profile
from .disorder import DisorderSpec, ensemble_stats, loglog_slope, map_realizations, sample_realization
from .dynamics import padded_half_side
from .energetics import driven_run, joule_predictions, linear_response_current
from .errors import ContractError
from .lattice_fields import Pulse, SpatialProfile, VectorPotential, build_box
from .onebody import diagonalize, fermi_symbol, hamiltonian
from .transport import (TransportKernel, field_response_kernel, green_kubo, green_kubo_check, macro_transport,
                        realization_kernel, xi_d_l, xi_p_l)

PROV = ["seed", "realization", "l", "beta", "lambda", "eta"]


@dataclass
class ScenarioResult:
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)       # file name -> (columns, rows)
    figures: dict = field(default_factory=dict)      # file name -> callable(path)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values())


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------
def disorder_spec(cfg: dict) -> DisorderSpec:
    m = cfg["model"]
    return DisorderSpec(m["distribution"], float(m["lambda"]), int(m["master_seed"]),
                        tuple(float(v) for v in m["points"]), float(m["p"]))


def build_pulse(cfg: dict) -> Pulse:
    f = cfg["field"]
    if f["pulse"] == "tabulated":
        return Pulse.tabulated(f["times"], f["values"])
    if f["pulse"] == "random_ac":
        rng = np.random.default_rng([int(cfg["model"]["master_seed"]), 0xAC])
        return Pulse.random_ac(rng, float(f["t0"]), float(f["t_end"]))
    return getattr(Pulse, f["pulse"])(float(f["t0"]), float(f["t_end"]), float(f["amplitude"]))


def lag_grid(cfg: dict) -> np.ndarray:
    n = cfg["numerics"]
    return np.linspace(0.0, float(n["t_max"]), int(n["n_t"]))


def driven_grid(cfg: dict, pulse: Pulse) -> np.ndarray:
    """Observation grid from the pulse onset to ``numerics.t_max``."""
    n = cfg["numerics"]
    t_max = float(n["t_max"])
    if t_max <= pulse.t0:
        raise ContractError("numerics.t_max must exceed the pulse onset for driven scenarios")
    return np.linspace(pulse.t0, t_max, int(n["n_t"]))


def _base(cfg: dict, index: int, l: int, eta: float = 0.0) -> list:
    m = cfg["model"]
    return [int(m["master_seed"]), int(index), int(l), float(m["beta"]), float(m["lambda"]), float(eta)]


def _tol(cfg: dict, key: str) -> float:
    return float(cfg["numerics"]["tolerances"][key])


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------
def run_transport(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, d, N = float(m["beta"]), int(m["d"]), int(m["N"])
    tgrid = lag_grid(cfg)
    if N < 2:
        raise ContractError("model.N must be >= 2 for an ensemble")
    kernels, table, macro = macro_transport(spec, beta, m["l_list"], N, tgrid, d, int(m["pad"]),
                                            int(n["workers"]))
    sym_res, zero_res, max_eig, d_ok = 0.0, 0.0, -math.inf, True
    per_p, per_d, ens = [], [], []
    for ker in kernels:
        sp = ker.samples_p
        sym_res = max(sym_res, float(np.abs(sp - sp.transpose(0, 1, 3, 2)).max()))
        zero_res = max(zero_res, float(np.abs(sp[:, 0]).max()))
        max_eig = max(max_eig, float(np.linalg.eigvalsh(0.5 * (sp + sp.transpose(0, 1, 3, 2))).max()))
        d_ok = d_ok and bool(np.all(np.abs(ker.samples_d) <= 2.0))
        for i in range(sp.shape[0]):
            for j, t in enumerate(tgrid):
                for k in range(d):
                    for q in range(d):
                        per_p.append(_base(cfg, i, ker.l) + [float(t), k, q, float(sp[i, j, k, q])])
            for k in range(d):
                per_d.append(_base(cfg, i, ker.l) + [k, float(ker.samples_d[i, k, k])])
        for t, k, q, v, se in ker.long_rows():
            ens.append(_base(cfg, -1, ker.l) + [t, k, q, v, se])
    res = ScenarioResult()
    res.metrics = {"xi_p_symmetry_residual": sym_res, "xi_p_zero_residual": zero_res,
                   "xi_p_negativity_max_eig": max_eig, "xi_d_range_ok": d_ok,
                   "xi_d_macro": macro["xi_d_00"], "xi_d_macro_uncertainty": macro["uncertainty"]}
    res.checks = {"xi_p_symmetric": sym_res <= _tol(cfg, "symmetry"),
                  "xi_p_vanishes_at_zero": zero_res <= _tol(cfg, "xi_p_zero"),
                  "xi_p_negative_semidefinite": max_eig <= _tol(cfg, "negativity"),
                  "xi_d_in_range": d_ok}
    res.tables = {
        "xi_p_realizations.csv": (PROV + ["t", "k", "q", "xi_p"], per_p),
        "xi_d_realizations.csv": (PROV + ["k", "xi_d"], per_d),
        "xi_p_ensemble.csv": (PROV + ["t", "k", "q", "xi_p_mean", "xi_p_stderr"], ens),
        "convergence.csv": (PROV + list(table[0].keys())[1:],
                            [_base(cfg, -1, row["l"]) + list(row.values())[1:] for row in table]),
    }
    series = {f"l={k.l}": k.xi_p[:, 0, 0] for k in kernels}
    bands = {f"l={k.l}": k.xi_p_stderr[:, 0, 0] for k in kernels}
    res.figures = {"xi_p.png": lambda p: plotting.line_plot(p, tgrid, series, "t", "Xi_p[0,0](t)",
                                                             "paramagnetic coefficient", bands=bands)}
    return res


# ---------------------------------------------------------------------------
# Green-Kubo
# ---------------------------------------------------------------------------
def run_greenkubo(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, d, N, pad = float(m["beta"]), int(m["d"]), int(m["N"]), int(m["pad"])
    tgrid = lag_grid(cfg)
    rows, curves, worst = [], [], 0.0
    for l in m["l_list"]:
        def one(i, l=l):
            box = build_box(d, l + max(pad, 1))
            eig = diagonalize(hamiltonian(box, sample_realization(spec, box, i), spec))
            return (green_kubo_check(eig, beta, l, tgrid), xi_p_l(eig, beta, l, tgrid)[:, 0, 0],
                    green_kubo(eig, beta, l, 0, 0, tgrid))
        out = map_realizations(one, N, int(n["workers"]))
        for i, (r, direct, gk) in enumerate(out):
            worst = max(worst, float(r))
            rows.append(_base(cfg, i, l) + [float(r)])
            for t, a, b in zip(tgrid, direct, gk):
                curves.append(_base(cfg, i, l) + [float(t), float(a), float(np.real(b))])
    first = [c for c in curves if c[1] == 0 and c[2] == m["l_list"][0]]
    res = ScenarioResult()
    res.metrics = {"green_kubo_max_residual": worst}
    res.checks = {"green_kubo_equivalence": worst <= _tol(cfg, "green_kubo")}
    res.tables = {"green_kubo_residuals.csv": (PROV + ["residual"], rows),
                  "green_kubo_curves.csv": (PROV + ["t", "direct", "green_kubo"], curves)}
    res.figures = {"green_kubo.png": lambda p: plotting.line_plot(
        p, [c[6] for c in first], {"direct": [c[7] for c in first], "Green-Kubo": [c[8] for c in first]},
        "t", "Xi_p[0,0](t)", "commutator form vs fluctuation form")}
    return res


# ---------------------------------------------------------------------------
# Ohm
# ---------------------------------------------------------------------------
def _field_setup(cfg: dict):
    m, f = cfg["model"], cfg["field"]
    d = int(m["d"])
    pulse = build_pulse(cfg)
    prof = SpatialProfile(f["profile"], d)
    etas = sorted((float(e) for e in f["eta_list"] if e != 0), key=abs, reverse=True)
    return d, pulse, prof, [float(v) for v in f["direction"]], etas


def run_ohm(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, N = float(m["beta"]), int(m["N"])
    d, pulse, prof, direction, etas = _field_setup(cfg)
    if len(etas) < 2:
        raise ContractError("degenerate input: need at least two nonzero field strengths")
    l = int(m["l_list"][0])
    tgrid = driven_grid(cfg, pulse)
    L = padded_half_side(l, prof.support_radius, tgrid[-1] - tgrid[0], d)
    vp1 = VectorPotential(pulse, prof, direction, l, 1.0)

    def one(i):
        box = build_box(d, L)
        real = sample_realization(spec, box, i)
        eig = diagonalize(hamiltonian(box, real, spec, mu=float(m["mu"])))
        ker = field_response_kernel(eig, beta, l, vp1, tgrid - tgrid[0])
        lin = linear_response_current(ker, pulse, vp1.direction, tgrid)
        runs = [driven_run(spec, beta, i, vp1.with_eta(eta), tgrid, float(n["dt"]), l_avg=l, half_side=L,
                           mu=float(m["mu"])) for eta in etas]
        return lin, runs

    out = map_realizations(one, N, int(n["workers"]))
    cur_rows, err_rows, slopes_p, slopes_d, bal, drift = [], [], [], [], 0.0, 0.0
    for i, (lin, runs) in enumerate(out):
        ep, ed = [], []
        for eta, dr in zip(etas, runs):
            c = dr.currents
            ep.append(float(np.abs(c.J_p / eta - lin["para"]).max()))
            ed.append(float(np.abs(c.J_d / eta - lin["dia"]).max()))
            bal = max(bal, dr.ledger.balance_residual)
            drift = max(drift, dr.run.drift)
            err_rows.append(_base(cfg, i, l, eta) + [ep[-1], ed[-1]])
            for j, t in enumerate(tgrid):
                for k in range(d):
                    cur_rows.append(_base(cfg, i, l, eta) + [float(t), k, float(c.J_p[j, k] / eta),
                                                             float(lin["para"][j, k]), float(c.J_d[j, k] / eta),
                                                             float(lin["dia"][j, k])])
        slopes_p.append(loglog_slope(np.abs(etas), ep) if min(ep) > 0 else math.nan)
        slopes_d.append(loglog_slope(np.abs(etas), ed) if min(ed) > 0 else math.nan)
    tol = _tol(cfg, "ohm_slope")
    res = ScenarioResult()
    res.metrics = {"slope_para": slopes_p, "slope_dia": slopes_d, "balance_residual": bal, "unitarity_drift": drift}
    res.checks = {"ohm_para_linear": all(abs(s - 1.0) <= tol for s in slopes_p),
                  "ohm_dia_linear": all(abs(s - 1.0) <= tol for s in slopes_d),
                  "energy_balance": bal <= _tol(cfg, "balance")}
    res.tables = {"currents.csv": (PROV + ["t", "k", "J_p_over_eta", "J_p_linear", "J_d_over_eta", "J_d_linear"],
                                   cur_rows),
                  "ohm_errors.csv": (PROV + ["err_para", "err_dia"], err_rows)}
    e0 = [r[6] for r in err_rows if r[1] == 0]
    d0 = [r[7] for r in err_rows if r[1] == 0]
    res.figures = {"ohm_errors.png": lambda p: plotting.line_plot(
        p, np.abs(etas), {"paramagnetic": e0, "diamagnetic": d0}, "eta", "sup |J/eta - J_lin|",
        "deviation from linear response", logx=True, logy=True)}
    return res


# ---------------------------------------------------------------------------
# Joule
# ---------------------------------------------------------------------------
def run_joule(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, N, workers = float(m["beta"]), int(m["N"]), int(n["workers"])
    d, pulse, prof, direction, etas = _field_setup(cfg)
    tgrid = driven_grid(cfg, pulse)
    lags = tgrid - tgrid[0]
    rows, ens_rows, rel_errs, bal, smin, endgame = [], [], {}, 0.0, math.inf, 0.0
    curves = {}
    for l in m["l_list"]:
        L = padded_half_side(l, prof.support_radius, tgrid[-1] - tgrid[0], d)
        ks = map_realizations(lambda i, l=l: realization_kernel(spec, beta, d, l, i, lags, pad=L - l), N, workers)
        xi_p, _ = ensemble_stats(np.stack([k.xi_p for k in ks]))
        xi_d, _ = ensemble_stats(np.stack([k.xi_d for k in ks]))
        ker = TransportKernel(lags, xi_p, xi_d, l, beta, spec.lam, N)
        for eta in etas:
            vp = VectorPotential(pulse, prof, direction, l, eta)
            pred = joule_predictions(ker, vp, tgrid)
            drs = map_realizations(lambda i, vp=vp: driven_run(spec, beta, i, vp, tgrid, float(n["dt"]),
                                                               half_side=L, currents=False), N, workers)
            dens = []
            for i, dr in enumerate(drs):
                bal = max(bal, dr.ledger.balance_residual)
                smin = min(smin, float(dr.ledger.S.min()))
                dd = dr.ledger.normalized(eta, (2 * l + 1) ** d).densities()
                dens.append(dd)
                for j, t in enumerate(tgrid):
                    rows.append(_base(cfg, i, l, eta) + [float(t)] + [float(dd[k][j]) for k in ("s", "p", "ip", "id")])
            mean_ip = np.mean([dd["ip"] for dd in dens], axis=0)
            for j, t in enumerate(tgrid):
                ens_rows.append(_base(cfg, -1, l, eta) + [float(t), float(mean_ip[j]), float(pred["ip"][j]),
                                                          float(pred["E_lin"][j]), float(pred["Q"][j])])
            if eta == etas[-1]:
                rel_errs[l] = float(np.abs(mean_ip - pred["ip"]).max() / max(np.abs(pred["ip"]).max(), 1e-300))
                curves[f"measured l={l}"] = mean_ip
                curves[f"predicted l={l}"] = pred["ip"]
                if pulse.ac:
                    after = tgrid >= vp.t1
                    for dd in dens:
                        if after.any():
                            endgame = max(endgame, float(np.abs(dd["id"][after]).max()),
                                          float(np.abs(dd["p"][after]).max()))
    res = ScenarioResult()
    ls = list(rel_errs)
    res.metrics = {"relative_error": rel_errs, "balance_residual": bal, "S_min": smin}
    res.checks = {"energy_balance": bal <= _tol(cfg, "balance"), "heat_positive": smin >= -_tol(cfg, "positivity"),
                  "joule_relative_error": rel_errs[ls[0]] <= _tol(cfg, "joule_relative")}
    if len(ls) >= 2:
        ratio = rel_errs[ls[-1]] / rel_errs[ls[0]] if rel_errs[ls[0]] > 0 else math.inf
        res.metrics["error_ratio"] = ratio
        res.checks["joule_error_shrinks"] = ratio <= _tol(cfg, "joule_ratio")
    if pulse.ac:
        res.metrics["ac_endgame_max"] = endgame
        res.checks["ac_endgame"] = endgame <= _tol(cfg, "ac_endgame")
    res.tables = {"energy_densities.csv": (PROV + ["t", "s", "p", "ip", "id"], rows),
                  "joule_ensemble.csv": (PROV + ["t", "ip_mean", "ip_predicted", "E_lin_predicted", "Q_predicted"],
                                         ens_rows)}
    res.figures = {"joule.png": lambda p: plotting.line_plot(p, tgrid, curves, "t", "ip(t)",
                                                             "paramagnetic energy density")}
    return res


# ---------------------------------------------------------------------------
# AC measure
# ---------------------------------------------------------------------------
def run_acmeasure(cfg: dict) -> ScenarioResult:
    m, n, f = cfg["model"], cfg["numerics"], cfg["field"]
    spec = disorder_spec(cfg)
    beta, d, N, pad = float(m["beta"]), int(m["d"]), int(m["N"]), int(m["pad"])
    l = int(m["l_list"][0])
    t0, t_end = float(f["t0"]), float(f["t_end"])
    tgrid = np.linspace(t0, t_end, int(n["n_t"]))
    lags = tgrid - t0

    def one(i):
        box = build_box(d, l + max(pad, 1))
        return diagonalize(hamiltonian(box, sample_realization(spec, box, i), spec))

    eigs = map_realizations(one, N, int(n["workers"]))
    bw = float(n["bin_width"]) or None
    meas = spectral_measure(eigs, beta, l, 0, bw, tgrid=lags)
    sig = np.mean([xi_p_l(e, beta, l, lags)[:, 0, 0] for e in eigs], axis=0)
    rng = np.random.default_rng([int(m["master_seed"]), 0xAC])
    checks = [ac_form_check(meas, sig, Pulse.random_ac(rng, t0, t_end), tgrid) for _ in range(3)]
    res = ScenarioResult()
    res.metrics = {"min_weight": float(meas.atoms_w.min()) if meas.atoms_w.size else 0.0,
                   "total_mass": meas.total_mass,
                   "reconstruction_residual": meas.provenance["reconstruction_residual"],
                   "bin_width": meas.provenance["bin_width"],
                   "dual_relative_error": [c["relative_error"] for c in checks],
                   "quadratic_form_lhs": [c["lhs"] for c in checks]}
    res.checks = {"weights_nonnegative": res.metrics["min_weight"] >= -_tol(cfg, "positivity"),
                  "cosine_reconstruction": res.metrics["reconstruction_residual"] <= _tol(cfg, "reconstruction"),
                  "dual_evaluation": max(res.metrics["dual_relative_error"]) <= _tol(cfg, "ac_dual"),
                  "quadratic_form_nonnegative": min(res.metrics["quadratic_form_lhs"]) >= -1e-8}
    res.tables = {"ac_measure.csv": (PROV + ["nu", "weight"],
                                     [_base(cfg, -1, l) + [c, w] for c, w in meas.rows()]),
                  "ac_dual.csv": (PROV + ["pulse", "lhs", "rhs", "relative_error"],
                                  [_base(cfg, -1, l) + [j, c["lhs"], c["rhs"], c["relative_error"]]
                                   for j, c in enumerate(checks)])}
    res.figures = {"ac_measure.png": lambda p: plotting.bar_plot(
        p, meas.centers, meas.weights, meas.provenance["bin_width"], "frequency", "weight",
        "binned spectral measure")}
    return res


# ---------------------------------------------------------------------------
# ergodic
# ---------------------------------------------------------------------------
def run_ergodic(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, d, N, pad = float(m["beta"]), int(m["d"]), int(m["N"]), int(m["pad"])
    ls = list(m["l_list"])
    if len(ls) < 2 or N < 10:
        raise ContractError("the self-averaging diagnostic needs >= 2 box sizes and model.N >= 10")
    rows, var_rows, variances = [], [], {k: [] for k in range(d)}
    for l in ls:
        def one(i, l=l):
            box = build_box(d, l + max(pad, 1))
            eig = diagonalize(hamiltonian(box, sample_realization(spec, box, i), spec))
            return np.diag(xi_d_l(fermi_symbol(eig, beta), l, box))
        vals = np.array(map_realizations(one, N, int(n["workers"])))
        for i in range(N):
            for k in range(d):
                rows.append(_base(cfg, i, l) + [k, float(vals[i, k])])
        for k in range(d):
            v = float(vals[:, k].var(ddof=1))
            variances[k].append(v)
            var_rows.append(_base(cfg, -1, l) + [k, (2 * l + 1) ** d, float(vals[:, k].mean()), v])
    vols = [(2 * l + 1) ** d for l in ls]
    slopes = {k: (loglog_slope(vols, v) if min(v) > 0 else math.nan) for k, v in variances.items()}
    tol = _tol(cfg, "ergodic_slope")
    res = ScenarioResult()
    res.metrics = {"variance_slope": slopes}
    res.checks = {f"variance_slope_k{k}": abs(s + 1.0) <= tol for k, s in slopes.items()}
    res.tables = {"xi_d_realizations.csv": (PROV + ["k", "xi_d"], rows),
                  "xi_d_variance.csv": (PROV + ["k", "volume", "mean", "variance"], var_rows)}
    res.figures = {"self_averaging.png": lambda p: plotting.line_plot(
        p, vols, {f"k={k}": v for k, v in variances.items()}, "|Lambda_l|", "Var Xi_d",
        "self-averaging", logx=True, logy=True)}
    return res


# ---------------------------------------------------------------------------
# decay
# ---------------------------------------------------------------------------
def run_decay(cfg: dict) -> ScenarioResult:
    m, n = cfg["model"], cfg["numerics"]
    spec = disorder_spec(cfg)
    beta, d, N = float(m["beta"]), int(m["d"]), int(m["N"])
    l = int(m["l_list"][-1])

    def one(i):
        box = build_box(d, l)
        eig = diagonalize(hamiltonian(box, sample_realization(spec, box, i), spec))
        return decay_profile(eig, beta, 0.0, beta / 2.0)

    profiles = map_realizations(one, N, int(n["workers"]))
    rows, rates, shell0 = [], [], 0.0
    for i, prof in enumerate(profiles):
        r = np.array([p[0] for p in prof])
        env = np.array([p[1] for p in prof])
        shell0 = max(shell0, float(env[0]))
        keep = env > 1e-300
        rates.append(-float(np.polyfit(r[keep], np.log(env[keep]), 1)[0]))
        for rr, ee in prof:
            rows.append(_base(cfg, i, l) + [rr, ee])
    res = ScenarioResult()
    res.metrics = {"shell0_max": shell0, "decay_rate": rates}
    res.checks = {"shell0_bounded": shell0 <= 1.0 + 1e-12, "envelope_decays": all(k > 0 for k in rates)}
    res.tables = {"decay_profile.csv": (PROV + ["radius", "envelope"], rows)}
    first = profiles[0]
    res.figures = {"decay.png": lambda p: plotting.line_plot(
        p, [q[0] for q in first], {"envelope": [q[1] for q in first]}, "|x|", "max |C(0,x)|",
        "two-point envelope", logy=True)}
    return res


SCENARIOS: dict[str, Callable[[dict], ScenarioResult]] = {
    "transport": run_transport, "greenkubo": run_greenkubo, "ohm": run_ohm, "joule": run_joule,
    "acmeasure": run_acmeasure, "ergodic": run_ergodic, "decay": run_decay,
}


def run_scenario(cfg: dict) -> ScenarioResult:
    return SCENARIOS[cfg["scenario"]](cfg)

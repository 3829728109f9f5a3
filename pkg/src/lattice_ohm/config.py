"""Run configuration: TOML in, fully resolved dict out.

Every field has a default, so an empty file is a valid configuration.
Validation reports the dotted path of the first offending field.
"""
from __future__ import annotations

import copy
import json
import math
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigError

SCENARIOS = ("transport", "ohm", "joule", "greenkubo", "acmeasure", "ergodic", "decay")
OUTPUT_ENV = "LATTICE_OHM_OUTPUT_DIR"

DEFAULTS: dict[str, Any] = {
    "scenario": "transport",
    "model": {
        "d": 1,
        "l_list": [4],
        "lambda": 1.0,
        "beta": 1.0,
        "distribution": "uniform",
        "points": [-1.0, 1.0],
        "p": 0.5,
        "master_seed": 0,
        "N": 2,
        "pad": 2,
        "mu": 0.0,
    },
    "field": {
        "pulse": "bump_derivative",
        "t0": 0.0,
        "t_end": 2.0,
        "amplitude": 1.0,
        "times": [],
        "values": [],
        "profile": "indicator",
        "direction": [],
        "eta_list": [0.1, 0.01, 0.001],
    },
    "numerics": {
        "dt": 0.002,
        "t_max": 4.0,
        "n_t": 201,
        "bin_width": 0.0,
        "workers": 1,
        "tolerances": {
            "symmetry": 1e-10,
            "negativity": 1e-8,
            "xi_p_zero": 1e-12,
            "green_kubo": 1e-7,
            "ohm_slope": 0.3,
            "balance": 1e-8,
            "positivity": 1e-10,
            "reconstruction": 1e-6,
            "ac_dual": 1e-3,
            "ac_endgame": 1e-6,
            "joule_relative": 0.1,
            "joule_ratio": 0.7,
            "ergodic_slope": 0.3,
        },
    },
    "output": {"directory": "results"},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        p = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(p, "unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(p, "expected a table")
            out[key] = _merge(base[key], val, p)
        else:
            out[key] = val
    return out


def _num(cfg, path, kind=float, lo=None, hi=None, lo_open=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(path, f"expected a number, got {node!r}")
    if kind is int and int(node) != node:
        raise ConfigError(path, f"expected an integer, got {node!r}")
    if isinstance(node, float) and not math.isfinite(node):
        raise ConfigError(path, "must be finite")
    if lo is not None and (node <= lo if lo_open else node < lo):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {node}")
    if hi is not None and node > hi:
        raise ConfigError(path, f"must be <= {hi}, got {node}")
    return kind(node)


def resolve(raw: dict | None) -> tuple[dict, list[str]]:
    """Apply defaults and validate; returns ``(config, warnings)``."""
    cfg = _merge(DEFAULTS, raw or {})
    warnings: list[str] = []
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {SCENARIOS}")
    m = cfg["model"]
    d = _num(cfg, "model.d", int, 1, 3)
    _num(cfg, "model.lambda", float, 0.0)
    _num(cfg, "model.beta", float, 0.0, lo_open=True)
    _num(cfg, "model.N", int, 1)
    _num(cfg, "model.pad", int, 1)
    _num(cfg, "model.master_seed", int, 0)
    _num(cfg, "model.mu", float)
    _num(cfg, "model.p", float, 0.0, 1.0)
    if m["distribution"] not in ("uniform", "two-point"):
        raise ConfigError("model.distribution", "must be 'uniform' or 'two-point'")
    if len(m["points"]) != 2 or any(abs(float(v)) > 1 for v in m["points"]):
        raise ConfigError("model.points", "need two values in [-1, 1]")
    ls = m["l_list"]
    if not isinstance(ls, list) or not ls or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in ls):
        raise ConfigError("model.l_list", "need a non-empty list of positive integers")
    if any(b <= a for a, b in zip(ls, ls[1:])):
        raise ConfigError("model.l_list", "must be strictly increasing")

    f = cfg["field"]
    if f["pulse"] not in ("bump", "bump_derivative", "random_ac", "tabulated"):
        raise ConfigError("field.pulse", "must be bump, bump_derivative, random_ac or tabulated")
    if f["profile"] not in ("indicator", "bump"):
        raise ConfigError("field.profile", "must be 'indicator' or 'bump'")
    t0 = _num(cfg, "field.t0", float)
    t_end = _num(cfg, "field.t_end", float)
    if f["pulse"] != "tabulated" and not t_end > t0:
        raise ConfigError("field.t_end", "must exceed field.t0")
    if f["pulse"] == "tabulated" and (len(f["times"]) < 2 or len(f["times"]) != len(f["values"])):
        raise ConfigError("field.times", "tabulated pulse needs matching times/values (>= 2)")
    if not f["direction"]:
        f["direction"] = [1.0] + [0.0] * (d - 1)
    if len(f["direction"]) != d or all(float(v) == 0 for v in f["direction"]):
        raise ConfigError("field.direction", f"need a nonzero vector of length {d}")
    etas = f["eta_list"]
    if not isinstance(etas, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in etas):
        raise ConfigError("field.eta_list", "need a list of numbers")
    need = {"ohm": 2, "joule": 1}.get(cfg["scenario"], 0)
    if sum(1 for v in etas if v != 0) < need:
        raise ConfigError("field.eta_list",
                          f"degenerate input: the {cfg['scenario']} scenario needs at least {need} nonzero field strengths")

    n = cfg["numerics"]
    dt = _num(cfg, "numerics.dt", float, 0.0, lo_open=True)
    _num(cfg, "numerics.t_max", float, 0.0, lo_open=True)
    _num(cfg, "numerics.n_t", int, 2)
    _num(cfg, "numerics.bin_width", float, 0.0)
    _num(cfg, "numerics.workers", int, 1)
    for key in n["tolerances"]:
        _num(cfg, f"numerics.tolerances.{key}", float, 0.0, lo_open=True)
    lam = float(m["lambda"])
    if dt * 4 * d * (2 + lam) > 0.5:
        warnings.append(f"numerics.dt: dt*4d*(2+lambda) = {dt * 4 * d * (2 + lam):.3g} > 0.5; "
                        "the midpoint stepper may be inaccurate")
    if not isinstance(cfg["output"]["directory"], str):
        raise ConfigError("output.directory", "must be a string")
    return cfg, warnings


def load(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"TOML parse error: {exc}") from exc


def to_json(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)

"""Command-line runner: ``lattice-ohm {run,validate,suite}``.

Exit codes: 0 when every check passed, 1 when a check failed, 2 for an
invalid configuration or usage, 3 when the computation itself aborted.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import io, plotting
from .acceptance import CRITERIA, run_all
from .errors import ConfigError, LatticeOhmError
from .scenarios import run_scenario

log = logging.getLogger("lattice_ohm")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def output_dir(flag: str | None, configured: str) -> Path:
    """``--out`` beats the environment variable, which beats the config file."""
    if flag:
        return Path(flag)
    env = os.environ.get(config_mod.OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(configured)


def _load_resolved(path: str, seed: int | None = None, workers: int | None = None):
    raw = config_mod.load(path)
    if seed is not None:
        raw.setdefault("model", {})["master_seed"] = seed
    if workers is not None:
        raw.setdefault("numerics", {})["workers"] = workers
    return config_mod.resolve(raw)


def cmd_validate(args) -> int:
    try:
        cfg, warnings = _load_resolved(args.config)
    except (ConfigError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(config_mod.to_json(cfg))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg, warnings = _load_resolved(args.config, args.seed, args.workers)
    except (ConfigError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = output_dir(args.out, cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_mod.to_json(cfg) + "\n")
    log.info("running scenario %s into %s", cfg["scenario"], out)
    try:
        res = run_scenario(cfg)
    except LatticeOhmError as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        io.write_json(out / "summary.json", {"scenario": cfg["scenario"], "aborted": True,
                                             "error": f"{type(exc).__name__}: {exc}"})
        return EXIT_ABORT
    for name, (cols, rows) in res.tables.items():
        io.write_csv(out / name, cols, rows)
    for name, build in res.figures.items():
        build(out / name)
    io.write_json(out / "summary.json", {"scenario": cfg["scenario"], "aborted": False, "metrics": res.metrics,
                                         "checks": res.checks, "passed": res.passed})
    for name, ok in res.checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return EXIT_OK if res.passed else EXIT_FAILED


def _parse_only(text: str | None):
    if not text:
        return None
    picked = {int(v) for v in text.split(",") if v.strip()}
    unknown = picked - set(CRITERIA)
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown criteria {sorted(unknown)}")
    return picked


def cmd_suite(args) -> int:
    out = output_dir(args.out, "results/suite")
    out.mkdir(parents=True, exist_ok=True)
    results = run_all(workers=args.workers or 1, only=args.only, echo=print)
    io.write_json(out / "suite_summary.json", {"criteria": [r.to_dict() for r in results],
                                               "passed": all(r.passed for r in results)})
    plotting.status_plot(out / "suite_status.png", [f"{r.number}. {r.title}" for r in results],
                         [r.passed for r in results], "acceptance battery")
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lattice-ohm", description="Linear-response charge transport of "
                                "disordered lattice fermions: experiments and acceptance checks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the scenario described by a TOML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override model.master_seed")
    r.add_argument("--workers", type=int, help="override numerics.workers")
    r.add_argument("--out", help=f"output directory (overrides ${config_mod.OUTPUT_ENV} and the config)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and print it with defaults applied")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("suite", help="run the acceptance battery with built-in settings")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help=f"output directory (overrides ${config_mod.OUTPUT_ENV})")
    s.add_argument("--only", type=_parse_only, help="comma-separated criterion numbers, e.g. 1,3,12")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

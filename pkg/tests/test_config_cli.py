import json
import subprocess
import sys
from pathlib import Path

import pytest

from lattice_ohm import config
from lattice_ohm.cli import main, output_dir
from lattice_ohm.errors import ConfigError
from lattice_ohm.io import PROVENANCE, read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_TRANSPORT = """
scenario = "transport"
[model]
d = 1
l_list = [3, 4]
N = 3
master_seed = 5
[numerics]
t_max = 2.0
n_t = 9
"""


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def test_empty_config_resolves_to_defaults():
    cfg, warnings = config.resolve({})
    assert cfg["scenario"] == "transport"
    assert cfg["model"]["beta"] == 1.0 and cfg["numerics"]["tolerances"]["ac_dual"] == 1e-3
    assert warnings == []


@pytest.mark.parametrize("raw,path", [
    ({"model": {"beta": -1.0}}, "model.beta"),
    ({"model": {"l_list": [4, 4]}}, "model.l_list"),
    ({"model": {"colour": 1}}, "model.colour"),
    ({"scenario": "nope"}, "scenario"),
    ({"field": {"t0": 2.0, "t_end": 1.0}}, "field.t_end"),
    ({"field": {"direction": [0.0]}}, "field.direction"),
    ({"model": {"d": 1.5}}, "model.d"),
    ({"scenario": "ohm", "field": {"eta_list": [0.0]}}, "field.eta_list"),
])
def test_invalid_configs_name_the_offending_field(raw, path):
    with pytest.raises(ConfigError) as exc:
        config.resolve(raw)
    assert str(exc.value).startswith(path + ":")


def test_degenerate_field_strengths_are_rejected():
    with pytest.raises(ConfigError, match="degenerate input"):
        config.resolve({"scenario": "ohm", "field": {"eta_list": [0.1, 0.0]}})
    config.resolve({"scenario": "joule", "field": {"eta_list": [0.001]}})


def test_coarse_time_step_warns():
    _, warnings = config.resolve({"numerics": {"dt": 0.05}})
    assert any("numerics.dt" in w for w in warnings)


def test_shipped_configs_are_valid():
    files = sorted(CONFIGS.glob("*.toml"))
    assert {f.stem for f in files} == set(config.SCENARIOS)
    for f in files:
        cfg, _ = config.resolve(config.load(f))
        assert cfg["scenario"] == f.stem


def test_output_directory_precedence(monkeypatch):
    monkeypatch.setenv(config.OUTPUT_ENV, "/env")
    assert output_dir("/flag", "/cfg") == Path("/flag")
    assert output_dir(None, "/cfg") == Path("/env")
    monkeypatch.delenv(config.OUTPUT_ENV)
    assert output_dir(None, "/cfg") == Path("/cfg")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------
def test_validate_prints_resolved_json(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, SMALL_TRANSPORT))]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["model"]["l_list"] == [3, 4] and cfg["model"]["lambda"] == 1.0


def test_validate_reports_config_errors(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, "[model]\nbeta = -1\n"))]) == 2
    assert "model.beta" in capsys.readouterr().err
    assert main(["validate", str(_write(tmp_path, "[model\n"))]) == 2
    assert main(["validate", str(tmp_path / "missing.toml")]) == 2


def test_run_writes_outputs_and_is_reproducible(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, SMALL_TRANSPORT)
    monkeypatch.setenv(config.OUTPUT_ENV, str(tmp_path / "a"))
    assert main(["run", str(cfg)]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out
    a, b = tmp_path / "a", tmp_path / "b"
    summary = json.loads((a / "summary.json").read_text())
    assert summary["passed"] and not summary["aborted"]
    assert {"xi_p_symmetry_residual", "xi_p_negativity_max_eig", "xi_d_range_ok"} <= set(summary["metrics"])
    assert json.loads((a / "config.json").read_text())["model"]["N"] == 3
    files = sorted(p.name for p in a.iterdir())
    assert any(f.endswith(".png") for f in files) and any(f.endswith(".csv") for f in files)
    for name in files:
        if name == "config.json":  # echoes the differing worker count
            ca, cb = (json.loads((x / name).read_text()) for x in (a, b))
            assert ca["numerics"].pop("workers") == 1 and cb["numerics"].pop("workers") == 2
            assert ca == cb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for csv_file in a.glob("*.csv"):
        header, rows = read_csv(csv_file)
        assert tuple(header[:6]) == PROVENANCE
        assert rows and all(r[0] == "5" for r in rows)


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write(tmp_path, SMALL_TRANSPORT)
    assert main(["run", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "config.json").read_text())["model"]["master_seed"] == 9
    _, rows = read_csv(next((tmp_path / "o").glob("*.csv")))
    assert rows[0][0] == "9"


def test_run_exit_codes(tmp_path):
    bad = _write(tmp_path, '[model]\nbeta = 0\n', "bad.toml")
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 2
    huge = _write(tmp_path, 'scenario = "transport"\n[model]\nd = 3\nl_list = [30]\n', "huge.toml")
    assert main(["run", str(huge), "--out", str(tmp_path / "y")]) == 3
    assert json.loads((tmp_path / "y" / "summary.json").read_text())["aborted"]
    # a tolerance below roundoff makes a check fail
    strict = _write(tmp_path, 'scenario = "greenkubo"\n[model]\nl_list = [3]\nN = 2\n[numerics]\nn_t = 9\n'
                    't_max = 2.0\n[numerics.tolerances]\ngreen_kubo = 1e-300\n', "strict.toml")
    assert main(["run", str(strict), "--out", str(tmp_path / "z")]) == 1
    assert main(["run", str(_write(tmp_path, SMALL_TRANSPORT)), "--workers", "0"]) == 2
    ohm0 = _write(tmp_path, 'scenario = "ohm"\n[field]\neta_list = [0.0]\n', "ohm0.toml")
    assert main(["run", str(ohm0), "--out", str(tmp_path / "w")]) == 2


def test_suite_subset(tmp_path, capsys):
    assert main(["suite", "--only", "12", "--out", str(tmp_path)]) == 0
    assert "1/1 criteria passed" in capsys.readouterr().out
    summary = json.loads((tmp_path / "suite_summary.json").read_text())
    assert summary["passed"] and summary["criteria"][0]["number"] == 12
    assert (tmp_path / "suite_status.png").exists()
    with pytest.raises(SystemExit):
        main(["suite", "--only", "13"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lattice_ohm", "validate", str(_write(tmp_path, SMALL_TRANSPORT))],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["scenario"] == "transport"

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from degenspec.cli import main
from degenspec.config import ConfigError, load_config, parse_config

SMALL_GRID = {"e_min": 1e-3, "angular": 8, "order": 4, "outer_panels": 4, "core_panels": 2,
              "ratio": 0.5, "surface_resolution": 16}


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def _solve_cfg(**potential):
    return {"symbol": {"kind": "bcs", "n": 2, "r": 1.0, "mu": 1.0},
            "potential": {"kind": "gaussian", "A": 1.0, "w": 1.0, **potential},
            "grids": dict(SMALL_GRID), "solve": {"lambda_list": [1.0]}}


def test_unknown_key_reported_with_line(tmp_path):
    text = '{\n  "symbol": {"kind": "bcs", "n": 2},\n  "potential": {"kind": "gaussian"},\n' \
           '  "grids": {\n    "e_min": 1e-3,\n    "shels": 4\n  }\n}\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "run.json")
    assert "run.json:6: unknown key 'grids/shels'" in str(exc.value)


def test_type_error_reported_with_line():
    text = '{\n  "symbol": {"kind": "bcs", "n": 2},\n  "potential": {"kind": "gaussian",\n' \
           '    "w": -1}\n}\n'
    with pytest.raises(ConfigError, match=r"<config>:4: potential/w"):
        parse_config(text)


@pytest.mark.parametrize("patch,match", [
    ({"solve": {"lambda_list": [0.5, 1.0]}}, "strictly decreasing"),
    ({"solve": {"lambda_list": []}}, "lambda_list"),
    ({"potential": {"kind": "gaussian-mix", "amplitudes": [1.0], "widths": [1.0, 2.0]}}, "widths"),
    ({"symbol": {"kind": "bcs", "n": 2, "r": 2.0}, "surface": {"with_ws": True}}, "r >= 2"),
    ({"symbol": {"kind": "custom-radial", "n": 2}}, "coeffs"),
])
def test_semantic_errors(patch, match):
    cfg = {"symbol": {"kind": "bcs", "n": 2}, "potential": {"kind": "gaussian"}}
    cfg.update(patch)
    with pytest.raises(ConfigError, match=match):
        parse_config(json.dumps(cfg))


def test_malformed_config_exits_2_without_output(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"symbol": {"kind": "bcs", "n": 2},\n "potential": }')
    out = tmp_path / "out"
    assert main(["solve", "--config", str(path), "--out", str(out)]) == 2
    assert not out.exists() and "bad.json:2" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json"]


def test_non_positive_lambda_is_rejected(tmp_path):
    path = _write(tmp_path, _solve_cfg())
    for bad in ("0", "-1", "abc"):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--config", str(path), "--out", str(tmp_path / "o"), "--lambda", bad])
        assert exc.value.code == 2


def test_solve_outputs_and_overwrite_protection(tmp_path):
    path = _write(tmp_path, _solve_cfg())
    out = tmp_path / "out"
    assert main(["solve", "--config", str(path), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["cross_check.csv", "manifest.json", "solve.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["status"] == "ok"
    assert manifest["tolerances"]["direct_relative_delta"] < 1e-8
    assert manifest["tolerances"]["refinement_relative_change"] < 0.02
    # existing directory without --force
    before = (out / "solve.csv").read_text()
    assert main(["solve", "--config", str(path), "--out", str(out)]) == 2
    assert (out / "solve.csv").read_text() == before
    assert main(["solve", "--config", str(path), "--out", str(out), "--force",
                 "--lambda", "0.9"]) == 0
    assert (out / "solve.csv").read_text() != before
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_reruns_are_byte_identical_and_echo_reloads(tmp_path):
    path = _write(tmp_path, _solve_cfg())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", str(path), "--out", str(a)]) == 0
    assert main(["solve", "--config", str(path), "--out", str(b)]) == 0
    for name in ("solve.csv", "cross_check.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["files"] == mb["files"]
    echo = _write(tmp_path, ma["config"], "echo.json")
    assert load_config(echo)["grids"]["shells"] == ma["config"]["grids"]["shells"]
    c = tmp_path / "c"
    assert main(["solve", "--config", str(echo), "--out", str(c)]) == 0
    assert (a / "solve.csv").read_bytes() == (c / "solve.csv").read_bytes()


def test_zero_potential_solve_exits_3(tmp_path):
    cfg = _solve_cfg()
    cfg["potential"] = {"kind": "zero"}
    out = tmp_path / "out"
    assert main(["solve", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "no-bound-state" and manifest["exit_code"] == 3


def test_repulsive_solve_uses_direct_path(tmp_path):
    cfg = _solve_cfg(A=-1.0)
    cfg["potential"]["attractive"] = False
    out = tmp_path / "out"
    assert main(["solve", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 3


def test_bad_thread_variable_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("DEGENSPEC_THREADS", "zero")
    path = _write(tmp_path, _solve_cfg())
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_surface_command(tmp_path):
    cfg = {"symbol": {"kind": "bcs", "n": 3, "r": 1.0}, "potential": {"kind": "gaussian"},
           "grids": {"surface_resolution": 6}, "surface": {"with_ws": False},
           "output": {"directory": "rel_out"}}
    path = _write(tmp_path, cfg)
    assert main(["surface", "--config", str(path)]) == 0
    out = tmp_path / "rel_out"
    report = json.loads((out / "surface_report.json").read_text())
    assert report["multiplicities"][:3] == [1, 3, 5]
    assert (out / "vs_matrix.csv").read_text().startswith("i,j,re,im\n")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tolerances"]["vs_hermiticity"] <= 1e-12
    assert set(manifest["files"]) == {p.name for p in out.iterdir()} - {"manifest.json"}


def test_surface_command_with_ws_and_zero_potential(tmp_path):
    cfg = {"symbol": {"kind": "bcs", "n": 2, "r": 1.0}, "potential": {"kind": "zero"},
           "grids": dict(SMALL_GRID, e_min=1e-5), "output": {"directory": str(tmp_path / "o")}}
    assert main(["surface", "--config", str(_write(tmp_path, cfg))]) == 0
    report = json.loads((tmp_path / "o" / "surface_report.json").read_text())
    assert report["negative_count"] == 0 and report["ws_residuals_decreasing"]
    assert (tmp_path / "o" / "ws_matrix.csv").exists()


def test_surface_file_input(tmp_path):
    cfg = {"symbol": {"kind": "bcs", "n": 2}, "potential": {"kind": "gaussian"},
           "grids": {"surface_resolution": 12}, "surface": {"with_ws": False}}
    first = tmp_path / "first"
    assert main(["surface", "--config", str(_write(tmp_path, cfg)), "--out", str(first)]) == 0
    cfg["grids"] = {"surface_file": "first/quadrature.csv"}
    second = tmp_path / "second"
    assert main(["surface", "--config", str(_write(tmp_path, cfg, "b.json")),
                 "--out", str(second)]) == 0
    assert (first / "vs_spectrum.csv").read_bytes() == (second / "vs_spectrum.csv").read_bytes()


def test_check_hypotheses(tmp_path):
    cfg = {"symbol": {"kind": "roton", "n": 2, "r": 2.0, "delta": 0.5},
           "potential": {"kind": "gaussian"}}
    out = tmp_path / "h"
    assert main(["check-hypotheses", "--config", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    data = json.loads((out / "hypotheses.json").read_text())
    assert data["passes"] and data["potential"]["kappa"] == 1


def test_missing_output_directory_is_config_error(tmp_path):
    path = _write(tmp_path, _solve_cfg())
    assert main(["solve", "--config", str(path)]) == 2


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, _solve_cfg())
    env = dict(os.environ, DEGENSPEC_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "degenspec", "check-hypotheses", "--config",
                           str(path), "--out", str(tmp_path / "m")], capture_output=True,
                          text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "degenspec", "--version"], capture_output=True,
                          text=True)
    assert proc.stdout.startswith("degenspec ")


def test_shipped_configs_validate():
    root = Path(__file__).resolve().parent.parent / "configs"
    for path in sorted(root.glob("*.json")):
        load_config(path)

#!/usr/bin/env python3
"""
Tests for the conebook front-end: configs, result files, exit codes and figures
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conebook import (
    CONVENTIONS,
    ResultTable,
    config_hash,
    main,
    parse_config,
    resolve_config,
    run,
    serialize_config,
)
from errors import ConebookError, ConfigError
from plot_results import emit_svg, main as replot

SNAPSHOT = Path(__file__).parent / "snapshots" / "conventions.txt"


def reach_config(**extra):
    overrides = ["reach.thetas=1.5707963267948966", "reach.times=1.0", "reach.n=20000"]
    overrides += [f"{k}={v}" for k, v in extra.items()]
    return resolve_config(overrides=overrides)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_config_round_trip():
    cfg = resolve_config(overrides=["t=0.5", "A.center=0.1,-0.2", "reach.thetas=0.1,0.2",
                                    "sde.sigma=0.2 + r", "plot.svg=yes"], seed=42)
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert cfg["A.center"] == complex(0.1, -0.2)
    assert cfg["plot.svg"] is True and cfg["seed"] == 42
    assert config_hash(parse_config(text)) == config_hash(cfg)


def test_config_file_with_comments(tmp_path):
    path = tmp_path / "prob.conf"
    path.write_text("# target set\nB.kind = annulus   # ring\nB.inner_radius = 0.1\n\nt = 0.25\n")
    cfg = resolve_config(path, ["t=0.75"])
    assert cfg["B.kind"] == "annulus"
    assert cfg["B.inner_radius"] == 0.1
    assert cfg["t"] == 0.75


@pytest.mark.parametrize("text", ["nope = 1", "t = fast", "measure = lebesgue",
                                  "seed = -1", "A.center = 0.1", "no equals sign"])
def test_bad_config_lines_raise(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_cli_rejects_bad_configs(tmp_path):
    out = str(tmp_path / "prob")
    assert main(["prob", "--set", "nope=1", "--out", out]) == 2
    assert main(["prob", "--set", "t=abc", "--out", out]) == 2
    assert main(["prob", "--config", str(tmp_path / "missing.conf"), "--out", out]) == 2
    assert main([]) == 2
    assert not (tmp_path / "prob.csv").exists()


def test_conventions_snapshot(capsys):
    assert main(["--list-conventions"]) == 0
    printed = capsys.readouterr().out
    assert printed == SNAPSHOT.read_text(encoding="utf-8")
    assert printed == CONVENTIONS


# ---------------------------------------------------------------------------
# Runs and result files
# ---------------------------------------------------------------------------

def test_reach_run_writes_all_files(tmp_path):
    prefix = tmp_path / "reach"
    assert run("reach", reach_config(), prefix) == 0
    frame = pd.read_csv(f"{prefix}.csv")
    assert list(frame["theta"]) == pytest.approx([np.pi / 2])
    assert frame["flat_radius"].iloc[0] == pytest.approx(1.0)
    assert frame["rel_error"].iloc[0] < 0.02
    assert bool(frame["contained"].iloc[0])

    payload = json.loads(Path(f"{prefix}.json").read_text())
    assert payload["metadata"]["angle_convention"] == "full_opening"
    assert payload["metadata"]["config_hash"] == config_hash(reach_config())
    assert payload["rows"][0]["tan_full_radius"] == "inf"
    assert parse_config(Path(f"{prefix}.conf").read_text()) == reach_config()

    endpoints = pd.read_csv(f"{prefix}_endpoints.csv")
    assert list(endpoints.columns) == ["x", "y"]
    assert len(endpoints) == 20000
    assert np.all(np.hypot(endpoints["x"], endpoints["y"]) <= 1.0 + 1e-9)


def test_endpoint_table_can_be_replotted(tmp_path, monkeypatch):
    prefix = tmp_path / "reach"
    assert run("reach", reach_config(**{"reach.n": 2000}), prefix) == 0
    argv = ["plot_results.py", f"{prefix}_endpoints.csv", str(np.pi / 2), "1.0"]
    monkeypatch.setattr(sys, "argv", argv)
    replot()
    assert (tmp_path / "reach_endpoints.svg").read_text().lstrip().startswith("<")


def test_reruns_are_byte_identical(tmp_path):
    cfg = reach_config(**{"plot.svg": "true", "reach.n": 3000})
    assert run("reach", cfg, tmp_path / "a") == 0
    assert run("reach", cfg, tmp_path / "b") == 0
    for suffix in (".csv", ".json", ".conf", ".svg", "_endpoints.csv"):
        first = (tmp_path / f"a{suffix}").read_bytes()
        assert first == (tmp_path / f"b{suffix}").read_bytes(), suffix


def test_numerical_error_exits_with_status_3(tmp_path):
    prefix = tmp_path / "prob"
    cfg = resolve_config(overrides=["A.radius=0.0", "n=200"])
    assert run("prob", cfg, prefix) == 3
    payload = json.loads(Path(f"{prefix}.json").read_text())
    assert payload["error"]["code"] == "empty_a"
    assert payload["error"]["type"] == "EmptyA"
    assert payload["metadata"]["command"] == "prob"
    assert not Path(f"{prefix}.csv").exists()


def test_oversized_sde_step_exits_with_status_3(tmp_path):
    prefix = tmp_path / "recur"
    cfg = resolve_config(overrides=["sde.sigma=100", "sde.step_h=1.0", "sde.horizon=5.0",
                                    "recurrence.n_paths=100", "recurrence.max_returns=5"])
    assert run("recur", cfg, prefix) == 3
    payload = json.loads(Path(f"{prefix}.json").read_text())
    assert payload["error"]["code"] == "step_too_large"
    assert payload["error"]["type"] == "StepTooLarge"
    assert payload["metadata"]["command"] == "recur"


def test_calabi_run_writes_growth_table(tmp_path):
    prefix = tmp_path / "calabi"
    cfg = resolve_config(overrides=["calabi.n_max=3", "quad.radial=16", "quad.angular=32"])
    assert run("calabi", cfg, prefix) == 0
    growth = pd.read_csv(f"{prefix}_growth.csv")
    assert list(growth.columns) == ["n", "cal_n", "cal_n_over_n", "mu_A_n"]
    assert np.allclose(growth["cal_n_over_n"], 4 * np.pi ** 2, rtol=1e-10)
    rows = pd.read_csv(f"{prefix}.csv")
    contact = rows[(rows["quantity"] == "CAL") & (rows["measure"] == "contact")]
    assert contact["value"].iloc[0] == pytest.approx(4 * np.pi ** 2, rel=1e-10)


def test_check_adapted_reports_failed_flags(tmp_path):
    prefix = tmp_path / "check"
    cfg = resolve_config(overrides=["field.kind=hopf", "check.samples=100"])
    assert run("check-adapted", cfg, prefix) == 0
    frame = pd.read_csv(f"{prefix}.csv", keep_default_na=False)
    flags = dict(zip(frame["flag"], frame["passed"]))
    assert flags == {"binding_tangent": True, "dtheta_section": True,
                     "alpha_section": True, "reeb_interior": False}
    witness = frame.loc[frame["flag"] == "reeb_interior", "witness"].iloc[0]
    assert len(witness.split(",")) == 4


def test_probability_columns_are_validated():
    table = ResultTable(["law", "estimate"], [["mc", 1.2]], {}, probability_columns=("estimate",))
    with pytest.raises(ConebookError):
        table.validate()
    angles = ResultTable(["theta"], [[np.pi]], {}, angle_columns=("theta",))
    with pytest.raises(ConebookError):
        angles.validate()
    assert json.loads(ResultTable(["x"], [[float("nan")]], {}).to_json())["rows"][0]["x"] == "nan"


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def test_svg_with_no_points(tmp_path):
    path = emit_svg(np.zeros((0, 2)), [(0.0, 0.0, 1.0, "page")], [], tmp_path / "empty.svg", "empty")
    text = Path(path).read_text(encoding="utf-8")
    assert "<svg" in text and text.rstrip().endswith("</svg>")
    assert not list(tmp_path.glob("*.tmp"))


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    print("✅ PASS" if code == 0 else "❌ FAIL")
    sys.exit(code)

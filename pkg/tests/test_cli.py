import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from yosida_fde import cli
from yosida_fde.config import bundled_scenario_path
from yosida_fde.io import read_json

LINEAR = bundled_scenario_path("linear_oracle")


def _small_linear(tmp_path, r=1.0, checks=None):
    """Coarser copy of the linear oracle scenario for quick CLI runs."""
    text = LINEAR.read_text()
    text = text.replace("h = 0.0009765625        # 2^-10", "h = 0.00390625")
    text = text.replace("lambda0 = 0.001953125   # 2^-9", "lambda0 = 0.0078125")
    text = text.replace("r = 1.0", f"r = {r}").replace("tol_lambda = 5e-3", "tol_lambda = 2e-2")
    if checks is not None:
        text = text.replace(
            'checks = ["integral_solution", "mild_solution", "resolvent_properties", '
            '"control_inequality"]', f"checks = {json.dumps(checks)}")
    path = tmp_path / f"linear_r{r}.toml"
    path.write_text(text)
    return path


def _strip_timings(obj):
    if isinstance(obj, dict):
        return {k: _strip_timings(v) for k, v in obj.items()
                if k not in ("timings", "seconds")}
    if isinstance(obj, list):
        return [_strip_timings(v) for v in obj]
    return obj


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = _small_linear(base)
    out = base / "run"
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    return base, cfg, out


def test_solve_writes_artifacts(solved):
    _, _, out = solved
    man = read_json(out / "manifest.json")
    assert man["converged"] and man["command"] == "solve"
    assert man["oracle_error"] <= 2e-2
    assert set(man["artifacts"]) == {"trajectory.csv", "trajectory.json", "manifest.json"}
    assert man["report"]["levels"]
    assert "timings" not in man["report"]


def test_bundled_linear_oracle_by_name(tmp_path, capsys):
    code = cli.main(["solve", "--config", "linear_oracle", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_OK
    man = read_json(tmp_path / "o" / "manifest.json")
    assert man["oracle_error"] <= 5e-3
    assert "oracle error" in capsys.readouterr().out


def test_missing_config_exit_1(tmp_path, capsys):
    code = cli.main(["solve", "--config", str(tmp_path / "nope.toml"),
                     "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_HARD
    assert "usage:" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_stability_margin_exit_1(tmp_path, capsys):
    text = bundled_scenario_path("halfline_decay").read_text()
    text = text.replace("omega = -1.0", "omega = 0.5").replace("c = 0.5", "c = 1.0")
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    code = cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_HARD
    assert "stability margin violated" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_not_converged_exit_2(tmp_path):
    text = _small_linear(tmp_path).read_text().replace("tol_lambda = 2e-2", "tol_lambda = 1e-9")
    cfg = tmp_path / "strict.toml"
    cfg.write_text(text)
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_REPORT
    man = read_json(out / "manifest.json")
    assert not man["converged"]
    assert (out / "trajectory.csv").exists()


def test_verify_all_pass(solved):
    base, cfg, out = solved
    vout = base / "verify_ok"
    code = cli.main(["verify", "--config", str(cfg), "--trajectory",
                     str(out / "trajectory.csv"), "--out", str(vout)])
    assert code == cli.EXIT_OK
    summary = read_json(vout / "verify" / "summary.json")
    assert all(summary["checks"].values())
    for name in summary["checks"]:
        assert read_json(vout / "verify" / f"{name}.json")["passed"]


def test_verify_tampered_trajectory_fails_with_witness(solved, tmp_path):
    _, cfg, out = solved
    rows = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    mask = (rows[:, 0] >= 1.0) & (rows[:, 0] <= 2.0)
    rows[mask, 1] += 0.1
    bad = tmp_path / "trajectory.csv"
    np.savetxt(bad, rows, delimiter=",", header=header, comments="", fmt="%.17g")
    (tmp_path / "trajectory.json").write_text((out / "trajectory.json").read_text())
    vout = tmp_path / "v"
    code = cli.main(["verify", "--config", str(cfg), "--trajectory", str(bad),
                     "--out", str(vout)])
    assert code == cli.EXIT_REPORT
    rep = read_json(vout / "verify" / "integral_solution.json")
    assert not rep["passed"]
    assert {"r", "t", "s", "x"} <= set(rep["witness"])


def test_verify_empty_check_list_warns(solved, tmp_path, caplog):
    base, _, out = solved
    cfg = _small_linear(tmp_path, checks=[])
    with caplog.at_level("WARNING"):
        code = cli.main(["verify", "--config", str(cfg), "--trajectory",
                         str(out / "trajectory.csv"), "--out", str(tmp_path / "v")])
    assert code == cli.EXIT_OK
    assert "no verification checks" in caplog.text


def test_verify_geometry_mismatch_exit_1(solved, tmp_path):
    _, _, out = solved
    cfg = _small_linear(tmp_path, r=0.5)
    code = cli.main(["verify", "--config", str(cfg), "--trajectory",
                     str(out / "trajectory.csv"), "--out", str(tmp_path / "v")])
    assert code == cli.EXIT_HARD
    assert not (tmp_path / "v").exists()


def test_asymptotics_periodic(tmp_path):
    out = tmp_path / "a"
    assert cli.main(["asymptotics", "--config", "halfline_periodic", "--out", str(out)]) == 0
    res = read_json(out / "asymptotics" / "asymptotics.json")
    assert res["passed"] and res["almost_periodicity_defect"] <= 1e-3
    with open(out / "asymptotics" / "residual_profile.csv") as fh:
        prof = list(csv.DictReader(fh))
    assert float(prof[-1]["residual_norm"]) <= 1e-3
    with open(out / "asymptotics" / "window_profile.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 5


def test_sweep_lambda_halving(tmp_path):
    sweep = tmp_path / "sweep.toml"
    sweep.write_text("[sweep]\ntie_h_to_lambda = true\n\n[sweep.axes]\n"
                     "lambda0 = [0.00390625, 0.001953125, 0.0009765625, 0.00048828125]\n")
    out = tmp_path / "s"
    code = cli.main(["sweep", "--config", str(LINEAR), "--sweep", str(sweep),
                     "--out", str(out), "--jobs", "2"])
    assert code == cli.EXIT_OK
    with open(out / "sweep" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok"] * 4
    ratios = [float(r["error_ratio"]) for r in rows[1:]]
    assert all(1.6 <= q <= 2.4 for q in ratios)
    assert len(list((out / "sweep" / "cells").iterdir())) == 4


def test_sweep_K0_halfline(tmp_path):
    text = bundled_scenario_path("halfline_decay").read_text()
    cfg = tmp_path / "hl.toml"
    cfg.write_text(text.replace("horizon = 50.0", "horizon = 20.0")
                   .replace("windows = [25.0, 50.0]", "windows = [20.0]"))
    sweep = tmp_path / "sweep.toml"
    sweep.write_text("[sweep.axes]\nK0 = [0.0, 0.3, 0.6, 0.9]\n")
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", str(cfg), "--sweep", str(sweep),
                     "--out", str(out)]) == cli.EXIT_OK
    with open(out / "sweep" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    obs = [float(r["observed_factor"]) for r in rows]
    assert all(b > a for a, b in zip(obs, obs[1:]))
    for r, o in zip(rows, obs):
        assert o <= float(r["K0"]) / 1.0 + 0.05


def test_sweep_rejects_undeclared_axis(tmp_path):
    sweep = tmp_path / "sweep.toml"
    sweep.write_text("[sweep.axes]\nkappa = [1.0]\n")
    code = cli.main(["sweep", "--config", str(LINEAR), "--sweep", str(sweep),
                     "--out", str(tmp_path / "s")])
    assert code == cli.EXIT_HARD


def test_empty_sweep_matches_solve(solved, tmp_path):
    _, cfg, out = solved
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    with open(tmp_path / "s" / "sweep" / "sweep.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    man = read_json(out / "manifest.json")
    assert float(row["error"]) == man["oracle_error"]
    assert int(row["outer_iterations"]) == man["rates"]["outer_iterations"]


def test_determinism(solved, tmp_path):
    _, cfg, out = solved
    for k in (1, 2):
        assert cli.main(["solve", "--config", str(cfg), "--seed", "7",
                         "--out", str(tmp_path / f"r{k}")]) == 0
        assert cli.main(["verify", "--config", str(cfg), "--seed", "7", "--trajectory",
                         str(out / "trajectory.csv"), "--out", str(tmp_path / f"v{k}")]) == 0
    m1, m2 = (_strip_timings(read_json(tmp_path / f"r{k}" / "manifest.json")) for k in (1, 2))
    assert m1 == m2 and m1["seed"] == 7
    assert ((tmp_path / "r1" / "trajectory.csv").read_bytes()
            == (tmp_path / "r2" / "trajectory.csv").read_bytes())
    for name in ("integral_solution", "resolvent_properties"):
        r1, r2 = (_strip_timings(read_json(tmp_path / f"v{k}" / "verify" / f"{name}.json"))
                  for k in (1, 2))
        assert r1 == r2


def test_scenarios_listing_and_entry_point(capsys):
    assert cli.main(["scenarios"]) == 0
    assert "linear_oracle" in capsys.readouterr().out
    proc = subprocess.run([sys.executable, "-m", "yosida_fde.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout

from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from localbs import cli, stationary

SMALL_RUNS = {
    "simulate": ["simulate", "--graph", "cycle:6", "--steps", "2000", "--replicas", "3"],
    "sample-stationary": ["sample-stationary", "--graph", "path:4", "--samples", "25000"],
    "verify-stationarity": ["verify-stationarity", "--graph", "cycle:6", "--samples", "20000"],
    "density": ["density", "--graph", "star:3", "--vertex", "1", "--samples", "25000"],
    "coupling": ["coupling", "--graph", "cycle:5", "--replicas", "300", "--horizon", "30"],
    "cycle-bounds": ["cycle-bounds", "--n", "8", "--replicas", "25000"],
    "avalanche": ["avalanche", "--graph", "cycle:8", "--graph", "cycle:12", "--alpha", "0.5", "0.75",
                  "--b", "0.5,1.0", "--steps", "20000"],
    "bc": ["bc", "--d", "2", "3", "--alpha", "0.25", "0.6875"],
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_every_subcommand_is_covered():
    assert set(SMALL_RUNS) == set(cli.COMMANDS)


@pytest.mark.parametrize("name", list(SMALL_RUNS))
def test_deterministic_serial_and_parallel(name, capsys):
    argv = SMALL_RUNS[name] + ["--seed", "11"]
    outputs = [run(capsys, *argv, "--jobs", jobs) for jobs in ("1", "1", "2")]
    assert all(code == 0 for code, _, _ in outputs), outputs[0][2]
    assert outputs[0][1] == outputs[1][1] == outputs[2][1]
    assert outputs[0][1].startswith(f"# schema: localbs.{name}/v1\n")


def test_seed_changes_output(capsys):
    a = run(capsys, *SMALL_RUNS["sample-stationary"], "--seed", "1")[1]
    b = run(capsys, *SMALL_RUNS["sample-stationary"], "--seed", "2")[1]
    assert a != b


def test_bc_ln2(capsys):
    code, out, _ = run(capsys, "bc", "--d", "2", "--alpha", "0.6875")
    assert code == 0
    d, alpha, bc = out.strip().splitlines()[-1].split(",")
    assert abs(float(bc) - math.log(2)) < 1e-9


def test_density_header(capsys):
    code, out, _ = run(capsys, "density", "--graph", "cycle:4", "--vertex", "0", "--samples", "10000")
    assert code == 0
    assert "# mixture: 0.75*Exp(1)+0.25*ExpPlus(3)" in out.splitlines()[:3]


def test_avalanche_columns(capsys):
    code, out, _ = run(capsys, *SMALL_RUNS["avalanche"])
    lines = out.splitlines()
    assert lines[1] == "n,alpha,b,D_estimate,D_se,sandwich_lower,sandwich_upper,regime"
    assert len(lines) == 2 + 2 * 4
    assert lines[2].split(",")[-1] in {"subcritical", "critical", "supercritical"}


def test_coupling_columns(capsys):
    _, out, _ = run(capsys, *SMALL_RUNS["coupling"])
    assert out.splitlines()[1] == "t,lower,lower_se,upper,upper_se,censored_fraction"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"graph": "cycle:5", "samples": 12, "seed": 4}))
    code, from_cfg, _ = run(capsys, "sample-stationary", "--config", str(cfg))
    assert code == 0 and len(from_cfg.splitlines()) == 2 + 12
    code, override, _ = run(capsys, "sample-stationary", "--config", str(cfg), "--samples", "3")
    assert len(override.splitlines()) == 2 + 3
    assert override.splitlines()[2] == from_cfg.splitlines()[2]


def test_output_env_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    code, out, _ = run(capsys, "bc", "--d", "2", "--alpha", "0.5", "--output", "sub/bc.csv")
    assert code == 0 and out == ""
    assert (tmp_path / "sub" / "bc.csv").read_text().startswith("# schema: localbs.bc/v1")


def test_trajectory_dump(tmp_path, capsys):
    traj = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "simulate", "--graph", "cycle:4", "--steps", "5", "--trajectory", str(traj))
    assert code == 0
    assert traj.read_text().splitlines()[1] == "t,X_t,replaced,new_values"
    assert len(traj.read_text().splitlines()) == 2 + 5


@pytest.mark.parametrize("argv", [
    ["bc", "--d", "2", "--alpha", "1.0"],
    ["simulate", "--graph", "cycle:2"],
    ["simulate", "--graph", "nothing:3"],
    ["simulate"],
    ["cycle-bounds", "--n", "6"],
    ["sample-stationary", "--graph", "path:4", "--method", "regular"],
    ["avalanche", "--graph", "cycle:8", "--alpha", "0.5"],
    ["nosuchcommand"],
    ["bc", "--d", "2", "--alpha", "x"],
])
def test_input_errors_exit_1(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 1
    record = json.loads(err.strip())
    assert record["error"] == "input" and record["message"]


def test_missing_config_is_input_error(capsys):
    code, _, err = run(capsys, "bc", "--config", "/nonexistent.json", "--d", "2", "--alpha", "0.5")
    assert code == 1 and json.loads(err)["error"] == "input"


def test_statistical_failure_exit_2(capsys, monkeypatch):
    def failing(g, samples, rng, level, thresholds):
        return stationary.StationarityReport((("vertex", 0, 0.5, 1e-9), ("vertex", 1, 0.01, 0.5)), level)

    monkeypatch.setattr(stationary, "verify_stationarity", failing)
    code, out, err = run(capsys, "verify-stationarity", "--graph", "cycle:4")
    assert code == 2
    assert json.loads(err)["failing"] == [["vertex", 0]]
    assert "vertex,0,0.5,1e-09,0" in out


def test_internal_error_exit_3(capsys, monkeypatch):
    def broken(o):
        raise stationary.InternalError("boom")

    monkeypatch.setitem(cli.COMMANDS, "bc", broken)
    code, _, err = run(capsys, "bc", "--d", "2", "--alpha", "0.5")
    assert code == 3 and json.loads(err) == {"error": "internal", "message": "boom"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "localbs", "bc", "--d", "2", "--alpha", "0.6875"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "0.693147" in proc.stdout


def test_verify_stationarity_example_twice(capsys):
    argv = ["verify-stationarity", "--graph", "cycle:6", "--samples", "100000", "--seed", "7"]
    first, second = run(capsys, *argv), run(capsys, *argv)
    assert first[0] == 0 and first == second

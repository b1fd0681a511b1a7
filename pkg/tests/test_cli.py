import json
import subprocess
import sys

import numpy as np
import pytest

from kgpump import artifacts, post
from kgpump.cli import dispatch
from kgpump.config import Config

FAST = ["--eps", "0.2", "--set", "run.t2_end=2.0", "--set", "regions.pre_threshold=0.5"]


def test_predict_pre_writes_csv(tmp_path):
    assert dispatch(["predict-pre", *FAST, "--order", "3", "--points", "9",
                     "--output", str(tmp_path)]) == 0
    names, data = artifacts.read_csv(tmp_path / "pre_U2_1.csv")
    assert names == ["t2", "x2", "re", "im", "abs"]
    assert data.shape == (81, 5)
    # every value written with 17 significant digits
    line = (tmp_path / "pre_U2_1.csv").read_text().splitlines()[-1]
    for tok in line.split(","):
        v = float(tok)
        assert float(f"{v:.17g}") == v and tok == f"{v:.17g}"


def test_csv_round_trip_exact(tmp_path):
    x = np.random.default_rng(1).standard_normal((20, 3))
    artifacts.write_csv(tmp_path / "a.csv", ("a", "b", "c"), x)
    _, y = artifacts.read_csv(tmp_path / "a.csv")
    assert np.array_equal(x, y)


def test_missing_config_exits_1(tmp_path, capsys):
    assert dispatch(["match", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "config file not found" in capsys.readouterr().err


def test_bad_key_exits_1(capsys):
    assert dispatch(["match", "--set", "run.nope=1"]) == 1
    assert "input error" in capsys.readouterr().err


def test_print_config_round_trip(tmp_path, capsys):
    assert dispatch(["simulate", "--print-config", "--eps", "0.07", "--gamma", "-0.5"]) == 0
    text = capsys.readouterr().out
    cfg = Config.from_string(text)
    assert cfg["run"]["epsilon"] == 0.07 and cfg["run"]["gamma"] == -0.5
    (tmp_path / "c.cfg").write_text(text)
    assert dispatch(["simulate", "--print-config", "--config", str(tmp_path / "c.cfg")]) == 0
    assert capsys.readouterr().out == text


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("KGPUMP_OUTPUT_DIR", str(tmp_path / "env"))
    assert dispatch(["predict-layer", *FAST, "--points", "3"]) == 0
    assert (tmp_path / "env" / "accumulated.csv").exists()
    assert (tmp_path / "env" / "layer_W11.csv").exists()


def test_match_json_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert dispatch(["match", *FAST, "--output", str(d)]) == 0
    assert (a / "match.json").read_bytes() == (b / "match.json").read_bytes()
    rep = json.loads((a / "match.json").read_text())
    assert set(rep["regions"]) == {"pre", "layer", "post"}


def test_solitons_from_csv(tmp_path):
    xi = np.linspace(-30, 30, 1024, endpoint=False)
    g = 3.0
    psi = post.sech_ansatz(1.0, g, xi)
    artifacts.write_csv(tmp_path / "env.csv", ("xi", "re", "im"), (xi, psi.real, psi.imag))
    assert dispatch(["solitons", "--input", str(tmp_path / "env.csv"), "--g", "3",
                     "--D", "1", "--output", str(tmp_path)]) == 0
    cen = json.loads((tmp_path / "census.json").read_text())
    assert cen["count"] == 1


def test_solitons_bad_input_exits_1(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    assert dispatch(["solitons", "--input", str(tmp_path / "bad.csv"),
                     "--output", str(tmp_path)]) == 1


def test_numerical_failure_exits_2(tmp_path, capsys):
    # export window straddling the resonance curve
    code = dispatch(["predict-pre", *FAST, "--t2-range", "0.5:1.5", "--points", "5",
                     "--output", str(tmp_path)])
    assert code == 2
    assert "numerical error" in capsys.readouterr().err


def test_focusing_required_exits_1(tmp_path):
    assert dispatch(["scenario", "soliton", "--gamma", "1", "--output", str(tmp_path)]) == 1


def test_simulate_small_run(tmp_path):
    args = ["simulate", "--eps", "0.2", "--set", "run.t2_end=0.4", "--set", "grid.x_min=-150",
            "--set", "grid.x_max=150", "--set", "grid.nx=1536", "--set", "run.probes=0",
            "--snapshot-every", "0.2", "--output", str(tmp_path)]
    assert dispatch(args) == 0
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert len(summary["snapshots_t2"]) == 2
    assert any(p.name.startswith("snapshot") for p in tmp_path.iterdir())


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "kgpump", "simulate", "--print-config"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "[run]" in res.stdout


def test_unknown_command_exits_1():
    assert dispatch(["frobnicate"]) == 1

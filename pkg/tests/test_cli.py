"""End-to-end CLI runs against temp configs and output directories."""

import json
import os

import numpy as np
import pytest

from sturmlab.cli import main, load_config, compile_expr, ConfigError


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(args):
    return main([str(a) for a in args])


# ------------------------------------------------------------- config parsing

def test_unknown_key_rejected(tmp_path, capsys):
    path = write_config(tmp_path, {"coeff": {"preset": "linear", "bb": 1.0}})
    code = run(["simulate", "--config", path, "--out", tmp_path / "o"])
    assert code == 2
    assert "coeff.bb" in capsys.readouterr().err


def test_bad_json_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert run(["simulate", "--config", path, "--out", tmp_path / "o"]) == 2


def test_type_checked_fields(tmp_path):
    path = write_config(tmp_path, {"grid": {"n": "257"}})
    assert run(["simulate", "--config", path, "--out", tmp_path / "o"]) == 2


def test_load_config_accepts_valid():
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump({"coeff": {"preset": "linear", "b": 0.5}, "seeds": [1, 2]}, fh)
        name = fh.name
    cfg = load_config(name)
    assert cfg["seeds"] == [1, 2]
    os.unlink(name)


# ------------------------------------------------------------- expressions

def test_expression_grammar_basics():
    fn, uses_norm = compile_expr("1.0 + 0.5*cos(x) + u*0")
    assert not uses_norm
    x = np.linspace(0, np.pi, 5)
    out = fn(x, np.zeros(5), np.zeros(5))
    assert np.allclose(out, 1.0 + 0.5 * np.cos(x))


def test_expression_norm_detection():
    fn, uses_norm = compile_expr("1.0 + 1.0/(1.0 + norm**2) + 0*u")
    assert uses_norm
    out = fn(np.zeros(3), np.zeros(3), np.zeros(3), 2.0)
    assert np.allclose(out, 1.2)


def test_expression_rejects_unsafe_constructs():
    for bad in ("__import__('os')", "u.sum()", "lambda: 1", "open('x')",
                "[1,2]", "q + 1"):
        with pytest.raises(ConfigError):
            compile_expr(bad)


# ------------------------------------------------------------- subcommands

SIM_CFG = {
    "grid": {"n": 65},
    "coeff": {"preset": "linear", "b": 0.5},
    "integrate": {"dt_init": 1e-3, "dt_max": 5e-2, "t_max": 1.0},
    "track": {"modes": 3},
    "init": {"modes": {"0": 1.0, "1": 0.5}},
    "seeds": [0],
}


def test_simulate_outputs(tmp_path):
    path = write_config(tmp_path, SIM_CFG)
    out = tmp_path / "out"
    assert run(["simulate", "--config", path, "--out", out]) == 0
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,norm,z,u_0,u_1,u_2,u_3"
    assert len(traj) > 10
    assert (out / "final_state.csv").exists()


def test_simulate_deterministic(tmp_path):
    path = write_config(tmp_path, SIM_CFG)
    run(["simulate", "--config", path, "--out", tmp_path / "a"])
    run(["simulate", "--config", path, "--out", tmp_path / "b"])
    for name in ("trajectory.csv", "final_state.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_equilibria_outputs(tmp_path):
    cfg = {
        "grid": {"n": 257},
        "coeff": {"preset": "linear", "b": 0.5},
        "scan": {"eta_min": -2.0, "eta_max": 2.0, "scan_n": 101},
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["equilibria", "--config", path, "--out", out]) == 0
    table = (out / "equilibria.csv").read_text().splitlines()
    assert table[0].startswith("id,eta,u_pi,morse,hyperbolic,lambda_0")
    assert len(table) == 2  # header + the single equilibrium
    assert json.loads((out / "permutation.json").read_text()) == [1]
    assert (out / "profile_e0.csv").exists()


def test_infinity_outputs(tmp_path):
    cfg = {
        "grid": {"n": 65},
        "coeff": {"preset": "linear", "b": 5.0},
        "sphere": {"n_modes": 16, "t_max": 20.0},
        "seeds": [3],
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["infinity", "--config", path, "--out", out]) == 0
    listing = json.loads((out / "infinity.json").read_text())
    assert len(listing) == 6
    assert {(d["j"], d["sign"]) for d in listing} == {
        (j, s) for j in (0, 1, 2) for s in (1, -1)
    }
    energies = np.loadtxt(out / "e_infinity.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(energies[:, 1]) <= 1e-12)


def test_graph_minimal_scenario(tmp_path):
    cfg = {
        "grid": {"n": 257},
        "coeff": {"preset": "linear", "b": 0.5},
        "scan": {"eta_min": -2.0, "eta_max": 2.0, "scan_n": 101},
        "integrate": {"dt_init": 1e-3, "dt_max": 1e-1, "t_max": 80.0,
                      "growup_threshold": 1e6},
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["graph", "--config", path, "--out", out]) == 0
    dot = (out / "graph.dot").read_text()
    assert dot.count("label=") >= 3  # 3 nodes
    assert dot.count("->") == 2
    report = json.loads((out / "report.json").read_text())
    assert len(report["bounded_equilibria"]) == 1
    assert len(report["infinity_equilibria"]) == 2
    assert all(e["status"] == "VerifiedNumerically" for e in report["edges"])
    assert report["discrepancies"]["predicted_but_unverified"] == []


def test_ymap_subcommand(tmp_path):
    cfg = {
        "grid": {"n": 257},
        "coeff": {"preset": "linear", "b": 5.0},
        "scan": {"eta_min": -2.0, "eta_max": 2.0, "scan_n": 101},
        "integrate": {"dt_init": 1e-3, "dt_max": 2e-2, "t_max": 5.0,
                      "growup_threshold": 1e30, "rtol": 1e-4},
        "ymap": {"n": 2, "reference_id": 0, "amplitude": 1e-3},
        "seeds": [1, 2],
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["ymap", "--config", path, "--out", out]) == 0
    results = json.loads((out / "ymap.json").read_text())
    assert len(results) == 2
    for r in results:
        assert r["sum_y_sq"] == pytest.approx(1.0, abs=1e-12)


def test_sweep_over_b(tmp_path):
    cfg = {
        "grid": {"n": 257},
        "coeff": {"preset": "linear", "b": 0.5},
        "scan": {"eta_min": -2.0, "eta_max": 2.0, "scan_n": 101},
        # tiny t_max: edges stay Undetermined but the pipeline must run
        "integrate": {"dt_init": 1e-3, "dt_max": 5e-2, "t_max": 2.0},
        "sweep": {"b_values": [0.5, 1.5]},
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["sweep", "--config", path, "--out", out]) == 0
    for b in ("0.5", "1.5"):
        report = json.loads((out / f"b_{b}" / "report.json").read_text())
        assert report["bounded_equilibria"][0]["eta"] == pytest.approx(0, abs=1e-8)


def test_seed_flag_overrides_config(tmp_path):
    cfg = dict(SIM_CFG)
    cfg["init"] = {"modes": {"0": 1.0}, "noise_amplitude": 0.1}
    cfg["seeds"] = [0, 1]
    path = write_config(tmp_path, cfg)
    out = tmp_path / "o1"
    assert run(["simulate", "--config", path, "--out", out, "--seed", "5"]) == 0
    # a single overridden seed: no per-seed suffix
    assert (out / "trajectory.csv").exists()
    assert not (out / "trajectory_seed0.csv").exists()


def test_emit_plots_data(tmp_path):
    path = write_config(tmp_path, SIM_CFG)
    out = tmp_path / "out"
    assert run(["simulate", "--config", path, "--out", out,
                "--emit-plots-data"]) == 0
    rows = (out / "norm_vs_t.dat").read_text().splitlines()
    assert all(len(r.split(" ")) == 2 for r in rows)

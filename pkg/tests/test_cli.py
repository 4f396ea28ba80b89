import csv
import json

import pytest

from censored_bernstein.cli import main

STABLE = {"family": "stable", "alpha": 0.5}


def run(tmp_path, command, config, *extra, name="out"):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / name
    code = main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    report = out / f"{command}.json"
    return code, (json.loads(report.read_text()) if report.exists() else None), out


def test_kernels_stable(tmp_path):
    code, rep, out = run(tmp_path, "kernels", {"spec": STABLE, "grid": {"T": 1.0, "n": 2048}})
    assert code == 0
    assert rep["result"]["q"] == pytest.approx(0.6366197724, abs=1e-10)
    assert rep["result"]["sonine_deviation"] <= 1e-6
    assert rep["schema_version"] == 1 and rep["config"]["grid"]["n"] == 2048
    rows = list(csv.reader(open(out / "kernel_table.csv")))
    assert rows[0] == ["x", "mu_bar", "k", "M", "P"] and len(rows) == 201


def test_kernels_mismatched_warns(tmp_path):
    cfg = {"spec": {"family": "stable", "alpha": 0.3}, "k_spec": {"family": "stable", "alpha": 0.6},
           "grid": {"T": 1.0, "n": 256}}
    code, rep, _ = run(tmp_path, "kernels", cfg)
    assert code == 0
    assert rep["result"]["sonine_deviation"] > 0.1
    assert any("mismatched" in w for w in rep["warnings"])


@pytest.mark.parametrize("config", [
    {"spec": {"family": "stable", "alpha": 1.5}},
    {"spec": STABLE, "grid": {"T": 1.0, "n": 16, "extra": 1}},
    {"spec": STABLE, "bogus": {}},
    {"spec": STABLE, "sim": {"n_paths": 0}},
])
def test_validation_exit_code(tmp_path, config, capsys):
    command = "simulate" if "sim" in config else "kernels"
    code, rep, _ = run(tmp_path, command, config)
    assert code == 2 and rep is None
    assert "validation error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["kernels", "--config", str(tmp_path / "nope.json")]) == 2


def test_classify(tmp_path):
    code, rep, _ = run(tmp_path, "classify", {"spec": {"family": "tempered_stable", "alpha": 0.5, "theta": 1.0}})
    assert code == 0 and rep["result"]["row"] == 2


def test_solve_trivial(tmp_path):
    cfg = {"spec": STABLE, "grid": {"T": 1.0, "n": 64}, "solver": {"lambda": 0.0, "phi0": 1.0}}
    code, _, out = run(tmp_path, "solve", cfg)
    assert code == 0
    rows = list(csv.reader(open(out / "solution.csv")))[1:]
    assert all(float(r[1]) == 1.0 for r in rows)


def test_solve_resolvent(tmp_path):
    cfg = {"spec": STABLE, "grid": {"T": 1.0, "n": 256}, "solver": {"lambda": -1.0, "phi0": 1.0}}
    code, rep, out = run(tmp_path, "solve", cfg)
    assert code == 0
    vals = [float(r[1]) for r in list(csv.reader(open(out / "solution.csv")))[1:]]
    assert all(0 < v <= 1 for v in vals)
    assert rep["result"]["residual"] < 1e-3


def test_solve_q_violation_exit_3(tmp_path):
    cfg = {"spec": {"family": "stable", "alpha": 0.6}, "k_spec": {"family": "stable", "alpha": 0.3},
           "grid": {"T": 1.0, "n": 64}, "solver": {"lambda": -1.0, "phi0": 1.0}}
    code, rep, _ = run(tmp_path, "solve", cfg)
    assert code == 3
    assert "hypothesis q<1 violated" in rep["error"]["message"]
    assert rep["result"] is None


def test_simulate_deterministic(tmp_path):
    cfg = {"spec": STABLE, "sim": {"n_paths": 500, "dt": 0.05, "seed": 9}}
    c1, _, out1 = run(tmp_path, "simulate", cfg, name="a")
    c2, _, out2 = run(tmp_path, "simulate", cfg, "--threads", "2", name="b")
    assert c1 == c2 == 0
    for f in ("simulate.json", "paths.csv"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()


def test_simulate_seed_flag_changes_result(tmp_path):
    cfg = {"spec": STABLE, "sim": {"n_paths": 200, "dt": 0.05}}
    _, a, _ = run(tmp_path, "simulate", cfg, "--seed", "1", name="a")
    _, b, _ = run(tmp_path, "simulate", cfg, "--seed", "2", name="b")
    assert a["config"]["sim"]["seed"] == 1
    assert a["result"]["lifetime_mean"] != b["result"]["lifetime_mean"]


def test_simulate_chain_mode(tmp_path):
    cfg = {"spec": STABLE, "sim": {"n_paths": 2000, "mode": "chain", "seed": 3}}
    code, rep, _ = run(tmp_path, "simulate", cfg)
    assert code == 0
    assert rep["result"]["terminated_fraction"] == 1.0
    assert rep["result"]["first_undershoot_mean"]["estimate"] == pytest.approx(0.5, abs=0.03)


def test_compare_chain_and_negative_control(tmp_path):
    base = {"spec": STABLE, "grid": {"n": 256},
            "sim": {"n_paths": 4000, "seed": 5},
            "compare": {"identities": ["chain_lifetime"]}}
    code, rep, _ = run(tmp_path, "compare", base, name="good")
    assert code == 0 and rep["result"]["all_pass"]
    bad = dict(base, compare={"identities": ["chain_lifetime"], "analytic_offset": 0.5})
    code, rep, _ = run(tmp_path, "compare", bad, name="bad")
    assert code == 0 and not rep["result"]["all_pass"]
    assert rep["warnings"]


def test_compare_path_identities(tmp_path):
    cfg = {"spec": STABLE, "grid": {"n": 256},
           "sim": {"n_paths": 2000, "dt": 0.02, "seed": 6, "lambda": -1.0},
           "compare": {"identities": ["potential_identity", "lifetime_laplace"]}}
    code, rep, _ = run(tmp_path, "compare", cfg)
    assert code == 0
    for c in rep["result"]["comparisons"]:
        assert set(c) >= {"analytic", "mc_estimate", "stderr", "z_score", "pass"}
        assert c["bias_allowance"] > 0

import json
import subprocess
import sys

import numpy as np

from dpwo.cli import cli_main
from dpwo.workload import load_matrix, save_matrix, gen_random_counting


def test_gen_intervals(tmp_path):
    out = tmp_path / "w.csv"
    assert cli_main(["gen", "--kind", "intervals", "--universe", "3", "--out", str(out)]) == 0
    A = load_matrix(out)
    assert A.entries.shape == (6, 3)


def test_gen_counting_and_histogram(tmp_path):
    w = tmp_path / "c.json"
    assert cli_main(["gen", "--kind", "counting", "--universe", "5", "--queries", "4",
                     "--seed", "2", "--out", str(w)]) == 0
    assert load_matrix(w).entries.shape == (4, 5)
    h = tmp_path / "h.csv"
    assert cli_main(["gen", "--kind", "histogram", "--universe", "5", "--n", "3",
                     "--mode", "point_mass", "--element", "2", "--out", str(h)]) == 0
    assert h.read_text().strip() == "0,0,3,0,0"
    assert cli_main(["gen", "--kind", "counting", "--universe", "5", "--out", str(w)]) == 1


def test_optimize_k(tmp_path):
    w = tmp_path / "w.csv"
    save_matrix(np.eye(6), w)
    out = tmp_path / "design.json"
    assert cli_main(["optimize", "--workload", str(w), "--n", "6", "--epsilon", "0.5",
                     "--out", str(out)]) == 0
    design = json.loads(out.read_text())
    assert design["k"] == 3
    assert {"k", "kyfan_value", "hk_value", "gap", "rescale_factor", "q", "sigma"} <= set(design)


def test_bench_missing_workload(capsys):
    assert cli_main(["bench", "--n", "3", "--epsilon", "1"]) == 1
    assert "usage" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert cli_main([]) == 1
    assert cli_main(["frobnicate"]) == 1
    assert cli_main(["bench", "--workload", "x", "--bogus"]) == 1


def test_help_exits_zero(capsys):
    for cmd in ("gen", "optimize", "run", "bench", "lowerbound"):
        assert cli_main([cmd, "--help"]) == 0
        assert "usage" in capsys.readouterr().out


def test_runtime_failures(tmp_path, capsys):
    assert cli_main(["optimize", "--workload", str(tmp_path / "nope.csv"), "--n", "3",
                     "--epsilon", "1"]) == 2
    w = tmp_path / "w.csv"
    save_matrix(np.eye(3), w)
    assert cli_main(["optimize", "--workload", str(w), "--n", "1", "--epsilon", "0.5"]) == 2
    assert "optimize failed" in capsys.readouterr().err


def test_run_and_design_reuse(tmp_path, capsys):
    w = tmp_path / "w.csv"
    save_matrix(gen_random_counting(5, 7, 0.5, 1), w)
    d = tmp_path / "d.json"
    assert cli_main(["optimize", "--workload", str(w), "--n", "4", "--epsilon", "0.5", "--out", str(d)]) == 0
    out = tmp_path / "run.json"
    args = ["run", "--workload", str(w), "--n", "4", "--epsilon", "0.5", "--seed", "3",
            "--design", str(d), "--emit-intermediates", "--out", str(out)]
    assert cli_main(args) == 0
    first = json.loads(out.read_text())
    assert first["projector_rank"] == 2 and len(first["w"]) == 5
    assert cli_main(args) == 0
    assert json.loads(out.read_text()) == first
    assert cli_main(["run", "--workload", str(w), "--n", "4", "--epsilon", "0.5",
                     "--mechanism", "gaussian"]) == 0
    assert "final" in json.loads(capsys.readouterr().out)


def test_bench_and_lowerbound(tmp_path, capsys):
    w = tmp_path / "w.csv"
    save_matrix(gen_random_counting(5, 7, 0.5, 3), w)
    base = ["--workload", str(w), "--n", "3", "--epsilon", "1"]
    assert cli_main(["bench", *base, "--trials", "20", "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("m,u,n,")
    assert cli_main(["bench", *base, "--trials", "20"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["instance"]["k"] == 3
    assert cli_main(["lowerbound", *base]) == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["method"] == "bruteforce" and cert["case2"] is not None
    assert cli_main(["lowerbound", "--workload", str(w), "--k", "2", "--method", "greedy"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "greedy"
    assert cli_main(["lowerbound", "--workload", str(w)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dpwo", "gen", "--kind", "intervals",
                          "--universe", "2", "--out", str(tmp_path / "i.csv")], capture_output=True)
    assert res.returncode == 0
    res = subprocess.run([sys.executable, "-m", "dpwo"], capture_output=True)
    assert res.returncode == 1


def test_run_small_epsilon_n(tmp_path, capsys):
    w = tmp_path / "w.csv"
    save_matrix(gen_random_counting(4, 5, 0.5, 2), w)
    assert cli_main(["run", "--workload", str(w), "--n", "2", "--epsilon", "0.3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["projector_rank"] == 0 and out["degenerate_k"] is True
    assert cli_main(["optimize", "--workload", str(w), "--n", "2", "--epsilon", "0.3"]) == 2

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ssavc.cli import format_csv, main, parse_csv
from ssavc.kernel import TimeSeries
from ssavc.numeric import child_seeds, make_rng
from ssavc.simulation import builtin_model, population_11_subspaces, simulate_vc
from ssavc.subspace import max_angle


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def csv_file(tmp_path):
    def make(model, T, seed):
        path = tmp_path / f"m{model}_{T}_{seed}.csv"
        path.write_text(format_csv(simulate_vc(builtin_model(model), T, make_rng(seed))))
        return path
    return make


def test_simulate_deterministic_bytes(capsys):
    _, a, _ = run(capsys, "simulate", "--model", 1, "--T", 16, "--seed", 7)
    _, b, _ = run(capsys, "simulate", "--model", 1, "--T", 16, "--seed", 7)
    assert a == b
    lines = a.strip().splitlines()
    assert lines[0] == "x1,x2,x3" and len(lines) == 17


@pytest.mark.parametrize("model, cols", [("4", 4), ("ex5.1", 3), ("3", 4)])
def test_simulate_column_counts(capsys, model, cols):
    code, out, _ = run(capsys, "simulate", "--model", model, "--T", 20, "--seed", 1)
    assert code == 0
    assert len(out.splitlines()[1].split(",")) == cols


def test_simulate_seed_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("SSA_VC_SEED", "13")
    _, a, _ = run(capsys, "simulate", "--model", 2, "--T", 10)
    _, b, _ = run(capsys, "simulate", "--model", 2, "--T", 10, "--seed", 13)
    assert a == b
    monkeypatch.setenv("SSA_VC_SEED", "abc")
    assert run(capsys, "simulate", "--model", 2, "--T", 10)[0] == 2


def test_csv_round_trip_bit_identical():
    x = simulate_vc(builtin_model(3), 50, make_rng(2))
    y = parse_csv(format_csv(x))
    np.testing.assert_array_equal(x.data, y.data)
    z = parse_csv(format_csv(x, header=False))
    np.testing.assert_array_equal(x.data, z.data)


def test_csv_errors_report_position(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,x\n")
    code, _, err = run(capsys, "test-dim", "--input", bad)
    assert code == 2 and "row 3, column 2" in err
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n3\n")
    code, _, err = run(capsys, "test-dim", "--input", ragged)
    assert code == 2 and "row 2" in err


@pytest.mark.parametrize("argv", [
    ["simulate", "--model", "9", "--T", "10"],
    ["simulate", "--T", "10"],
    ["test-dim"],
    ["test-dim", "--input", "/nonexistent/file.csv"],
    ["split", "--input", "x.csv", "--depth", "5"],
    ["bench", "--reps", "5"],
    ["bench", "--reps", "10", "--models", "1,8"],
    ["frobnicate"],
])
def test_input_errors_exit_2(capsys, argv):
    assert main(argv) == 2


def test_empty_and_short_files(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "test-dim", "--input", empty)[0] == 2
    short = tmp_path / "short.csv"
    short.write_text(format_csv(simulate_vc(builtin_model(1), 30, make_rng(0))))
    assert run(capsys, "test-dim", "--input", short)[0] == 2


def test_test_dim_report(capsys, csv_file):
    path = csv_file(2, 2000, 4)
    code, out, _ = run(capsys, "test-dim", "--input", path, "--local")
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == "ssa-vc/1"
    assert rep["global"]["d"] == 2 and rep["global"]["d0"] == 2
    assert len(rep["global"]["xi"]) == 3
    assert len(rep["local"]) == 24
    assert rep["h"] == pytest.approx(2000**-0.35)


def test_test_dim_output_file(tmp_path, capsys, csv_file):
    path = csv_file(1, 500, 1)
    out = tmp_path / "r.json"
    assert run(capsys, "test-dim", "--input", path, "--output", out)[0] == 0
    assert json.loads(out.read_text())["command"] == "test-dim"


def test_alpha_monotonicity_on_null_data(tmp_path, capsys):
    spec = builtin_model("stationary")
    totals = {}
    for alpha in (0.5, 0.01):
        total = 0
        for seed in child_seeds(31, 20):
            path = tmp_path / f"s{seed}.csv"
            if not path.exists():
                path.write_text(format_csv(simulate_vc(spec, 500, make_rng(seed))))
            _, out, _ = run(capsys, "test-dim", "--input", path, "--alpha", alpha)
            total += json.loads(out)["global"]["d0"]
        totals[alpha] = total
    assert totals[0.5] <= totals[0.01]


def test_split_depth_zero_single_node(capsys, csv_file):
    code, out, _ = run(capsys, "split", "--input", csv_file(5, 1000, 2), "--depth", 0)
    rep = json.loads(out)
    assert code == 0 and len(rep["nodes"]) == 1
    assert rep["nodes"][0]["midpoint"] == 0.5


def test_split_nodes_and_flags(capsys, csv_file):
    _, out, _ = run(capsys, "split", "--input", csv_file(5, 2000, 3), "--depth", 1)
    rep = json.loads(out)
    assert [n["midpoint"] for n in rep["nodes"]] == [0.5, 0.25, 0.75]
    assert rep["nodes"][0]["outcome"] in {"P1", "P2", "P3", "Other"}
    _, out, _ = run(capsys, "split", "--input", csv_file(5, 200, 3), "--depth", 1)
    flags = [n["flags"] for n in json.loads(out)["nodes"]]
    assert "insufficient-bandwidth" in flags[1] and "insufficient-bandwidth" in flags[2]


def test_subspace_pool_csv(tmp_path, capsys, csv_file):
    pool = tmp_path / "pool.csv"
    code, out, _ = run(capsys, "subspace", "--input", csv_file("ex5.1", 1000, 8),
                       "--pool-csv", pool)
    assert code == 0
    rep = json.loads(out)
    lines = pool.read_text().splitlines()
    assert lines[0] == "vertex,u,pairing,column,b1,b2,b3"
    assert len(lines) - 1 == rep["pool_size"] * rep["d"]
    assert len(rep["center_bases"]) == len(rep["cluster_sizes"])


def test_subspace_example_model_near_population(tmp_path, capsys):
    # per-draw hit rate is roughly 0.8, so check a frequency over fixed seeds
    truth = population_11_subspaces(builtin_model("ex5.1"))
    hits = 0
    for seed in child_seeds(81, 10):
        path = tmp_path / f"e{seed}.csv"
        path.write_text(format_csv(simulate_vc(builtin_model("ex5.1"), 1000, make_rng(seed))))
        code, out, _ = run(capsys, "subspace", "--input", path)
        assert code == 0
        basis = np.array(json.loads(out)["basis"])
        hits += min(max_angle(basis, b) for b in truth) < math.radians(20)
    assert hits >= 7


def test_subspace_white_noise_full_space(capsys, csv_file):
    _, out, _ = run(capsys, "subspace", "--input", csv_file("stationary", 1000, 5))
    rep = json.loads(out)
    assert rep["d"] == 3
    np.testing.assert_allclose(np.array(rep["basis"]) @ np.array(rep["basis"]).T, np.eye(3),
                               atol=1e-12)


def test_subspace_theta0_monotone(capsys, csv_file):
    path = csv_file("ex5.1", 1000, 9)
    counts = []
    for theta in (5, 45):
        _, out, _ = run(capsys, "subspace", "--input", path, "--theta0", theta)
        rep = json.loads(out)
        counts.append(len(rep["cluster_sizes"]) + len(rep["small_cluster_sizes"]))
    assert counts[0] >= counts[1]


def test_subspace_empty_pool_exit_4(tmp_path, capsys):
    # a single trending coordinate has one nonzero eigenvalue at every u
    T = 800
    t = np.arange(1, T + 1) / T
    data = make_rng(0).standard_normal((1, T)) * (1 + 4 * t)
    path = tmp_path / "trend.csv"
    path.write_text(format_csv(TimeSeries(data)))
    code, _, err = run(capsys, "subspace", "--input", path)
    assert code == 4 and "empty" in err


def test_bench_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["bench", "--suite", "dims", "--models", "2", "--T-list", "300", "--reps", "10",
            "--seed", "3"]
    assert main(argv + ["--output", str(a)]) == 0
    assert main(argv + ["--output", str(b), "--jobs", "2"]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert (a / "tables.csv").read_bytes() == (b / "tables.csv").read_bytes()
    rows = (a / "tables.csv").read_text().splitlines()
    assert rows[0] == "model,T,rep,seed,status,d0,dplus,dminus,d" and len(rows) == 11
    summary = json.loads((a / "summary.json").read_text())
    assert summary["models"]["2"]["300"]["reps"] == 10


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ssavc", "simulate", "--model", "1", "--T", "8",
                           "--seed", "1"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 9
    proc = subprocess.run([sys.executable, "-m", "ssavc", "--version"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip()

import csv
import io
import json
import math
import shutil
import subprocess
import sys

import pytest

from opengossip.cli import main
from opengossip.report import ANALYTIC_CSV_HEADER, RunReport


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fixed_point_json(capsys):
    code, out, _ = run(["analytic", "fixed-point", "--n", "25", "--p", "0.05"], capsys)
    assert code == 0
    rep = RunReport.from_json(out)
    assert rep.analytic["variance"] == pytest.approx(0.0040775, rel=1e-4)


def test_spectrum_p1(capsys):
    code, out, _ = run(["analytic", "spectrum", "--n", "100", "--p", "1"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["analytic"]["r_plus"] == pytest.approx(0.99, abs=1e-15)
    assert rep["analytic"]["r_minus"] == pytest.approx(0.98, abs=1e-15)


def test_trajectory_csv(tmp_path, capsys):
    path = tmp_path / "traj.csv"
    code, _, _ = run(["analytic", "trajectory", "--n", "5", "--p", "0.5", "--steps", "10",
                      "--csv", str(path)], capsys)
    assert code == 0
    r = rows(path)
    assert tuple(r[0].keys()) == ANALYTIC_CSV_HEADER
    assert len(r) == 11
    for row in r:
        assert float(row["variance"]) == pytest.approx(
            float(row["mean_sq"]) - float(row["sq_mean"]), abs=1e-15)


@pytest.mark.parametrize("extra", [["--schedule", "constant", "--p", "0.2"],
                                   ["--schedule", "inverse"],
                                   ["--schedule", "fixed-rate", "--lam-a", "2"],
                                   ["--schedule", "table", "--table", "1,0.5,0.25"]])
def test_growing_csv(tmp_path, capsys, extra):
    path = tmp_path / "g.csv"
    code, _, _ = run(["analytic", "growing", "--n-max", "50", "--csv", str(path), *extra], capsys)
    assert code == 0
    assert len(rows(path)) >= 49


def test_bound_passes(capsys, tmp_path):
    path = tmp_path / "b.csv"
    code, out, _ = run(["analytic", "bound", "--p", "0.3", "--n-max", "2000",
                        "--csv", str(path)], capsys)
    assert code == 0
    assert json.loads(out)["verdicts"]
    r = rows(path)
    assert all(float(x["w_n"]) <= float(x["bound"]) for x in r)


def test_baseline(capsys):
    code, out, _ = run(["analytic", "baseline", "--n", "1000", "--K", "5"], capsys)
    assert code == 0
    a = json.loads(out)["analytic"]
    assert f"{a['closed_over_open_limit']:.3g}" == "0.0404"
    assert a["closed_limit"] == pytest.approx(math.exp(-5))


def test_simulate_fixed_single(tmp_path, capsys):
    path, vpath = tmp_path / "s.csv", tmp_path / "v.csv"
    code, out, _ = run(["simulate", "fixed", "--n", "4", "--p", "0.1", "--replacements", "10",
                        "--seed", "7", "--csv", str(path), "--values-csv", str(vpath),
                        "--overlay"], capsys)
    assert code == 0
    rep = json.loads(out)
    inst = rep["empirical"]["replacement_instants"]
    assert len(inst) == 10
    r = rows(path)
    assert [int(x["t"]) for x in r if x["event"] == "replacement"] == inst
    assert {"departed", "arrived", "analytic_variance"} <= set(r[0])
    v = rows(vpath)
    assert list(v[0]) == ["t", "x0", "x1", "x2", "x3"] and len(v) == len(r)


def test_simulate_fixed_ensemble_check(tmp_path, capsys):
    path = tmp_path / "e.csv"
    code, out, _ = run(["simulate", "fixed", "--n", "10", "--p", "0.2", "--events", "300",
                        "--replicates", "400", "--check", "--csv", str(path)], capsys)
    rep = json.loads(out)
    assert code == 0, rep["verdicts"]
    assert "variance_se" in rows(path)[0]


def test_simulate_growing(tmp_path, capsys):
    path = tmp_path / "g.csv"
    code, _, _ = run(["simulate", "growing", "--p", "0.3", "--arrivals", "50",
                      "--replicates", "20", "--csv", str(path)], capsys)
    assert code == 0
    r = rows(path)
    assert len(r) == 51 and "t_event" in r[0]


def test_compare_fixed_and_negative_control(capsys):
    base = ["compare", "fixed", "--n", "10", "--p", "0.2", "--events", "300",
            "--replicates", "400"]
    code, out, _ = run(base, capsys)
    assert code == 0
    assert RunReport.from_json(out).passed
    code, out, _ = run(base + ["--analytic-p", "0.9"], capsys)
    assert code == 1
    assert not RunReport.from_json(out).passed


def test_compare_misaligned(capsys):
    code, _, err = run(["compare", "fixed", "--n", "10", "--p", "0.2", "--events", "100",
                        "--replicates", "10", "--analytic-horizon", "50"], capsys)
    assert code == 2 and "misaligned" in err


@pytest.mark.parametrize("argv", [
    ["analytic", "fixed-point", "--n", "5", "--p", "0"],
    ["analytic", "fixed-point", "--n", "5", "--p", "1.5"],
    ["simulate", "fixed", "--n", "1"],
    ["compare", "fixed", "--replicates", "1"],
    ["simulate", "growing", "--schedule", "table"],
])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and err.startswith("opengossip: error:")


def test_csv_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "fixed", "--n", "8", "--events", "200", "--replicates", "5", "--seed", "3"]
    run(argv + ["--csv", str(a)], capsys)
    run(argv + ["--csv", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_env_seed(tmp_path, capsys, monkeypatch):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    argv = ["simulate", "fixed", "--n", "5", "--events", "50"]
    monkeypatch.setenv("OPENGOSSIP_SEED", "99")
    run(argv + ["--csv", str(a)], capsys)
    run(argv + ["--csv", str(b), "--seed", "99"], capsys)
    monkeypatch.delenv("OPENGOSSIP_SEED")
    run(argv + ["--csv", str(c)], capsys)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_json_to_file_round_trip(tmp_path, capsys):
    path = tmp_path / "r.json"
    code, out, _ = run(["analytic", "spectrum", "--n", "50", "--p", "0.3", "--json", str(path)],
                       capsys)
    assert code == 0 and out == ""
    rep = RunReport.from_json(path.read_text())
    assert RunReport.from_json(rep.to_json()) == rep
    assert all(math.isfinite(v) for v in rep.analytic.values() if isinstance(v, float))


def test_console_script():
    exe = shutil.which("opengossip")
    cmd = [exe] if exe else [sys.executable, "-m", "opengossip.cli"]
    res = subprocess.run(cmd + ["analytic", "fixed-point", "--n", "3", "--p", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["analytic"]["sq_mean"] == pytest.approx(1 / 36)

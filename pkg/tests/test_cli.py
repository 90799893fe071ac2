import csv
import json

import numpy as np
import pytest

from gqlab.cli import fmt, main


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_bs_three_rows(tmp_path):
    assert main(["bs", "--k", "3", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "bs.csv")
    assert rows[0] == ["b_1", "strict_level"]
    assert [r[1] for r in rows[1:]] == ["1", "3", "3"]
    assert np.allclose([float(r[0]) for r in rows[1:]], [0, 1 / 3, 2 / 3])


def test_limit_rows(tmp_path):
    assert main(["limit", "--k", "1", "--n", "1", "--n-max", "3", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "limit.csv")
    assert rows[0] == ["N", "eigenvalue", "multiplicity", "cumulative"]
    assert rows[1:] == [["0", "0", "1", "1"], ["1", "1", "1", "2"], ["2", "2", "1", "3"],
                        ["3", "3", "1", "4"]]


def test_limit_to_stdout(capsys):
    assert main(["limit", "--k", "2", "--n", "2", "--n-max", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["N,eigenvalue,multiplicity,cumulative", "0,0,4,4", "1,2,8,12"]


@pytest.mark.slow
def test_verify_flat_exit_zero(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["passed"] and len(report["checks"]) == len(lines)


@pytest.mark.parametrize("argv", [
    ["bs", "--preset", "nosuch"],
    ["bs", "--n", "3"],
    ["bs", "--grid", "64by64"],
    ["sweep", "--s", "0.1,-0.2"],
    ["bs", "--bogus"],
    ["spectrum", "--operator", "weird"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[run]\nk = 2\n[bs]\nk = 4\n")
    assert main(["bs", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "bs.csv")) == 5
    assert main(["bs", "--config", str(cfg), "--k", "1", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "bs.csv")) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[run]\ncolour = blue\n")
    assert main(["bs", "--config", str(bad)]) == 2
    assert main(["bs", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_spectrum_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["spectrum", "--k", "2", "--grid", "32x32", "--m", "6"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    ra, rb = read_csv(a / "spectrum.csv"), read_csv(b / "spectrum.csv")
    assert ra[0] == ["j", "lambda", "residual"] and len(ra) == 7
    va = np.array([[float(x) for x in r] for r in ra[1:]])
    vb = np.array([[float(x) for x in r] for r in rb[1:]])
    assert np.allclose(va[:, 1], vb[:, 1], atol=1e-10, rtol=0)
    clusters = json.loads((a / "clusters.json").read_text())
    assert [c["multiplicity"] for c in clusters["clusters"]] == [2, 2, 2]


def test_assemble_writes_coo(tmp_path):
    assert main(["assemble", "--grid", "8x8", "--operator", "bochner", "--out", str(tmp_path)]) == 0
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and files[0].suffix == ".coo"


def test_gap_json(tmp_path):
    assert main(["gap", "--k", "2", "--grid", "32x32", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "gap.json").read_text())
    assert {"cluster_size", "gap", "rr_expected", "rr_verdict"} <= set(rep)
    assert rep["cluster_size"] == 2 and rep["rr_verdict"]


def test_sweep_csv_columns(tmp_path):
    argv = ["sweep", "--k", "2", "--grid", "32x32", "--s", "0.4,0.2", "--m", "4",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert rows[0] == ["s", "j", "lambda", "target", "abs_err"]
    assert len(rows) == 9
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert summary["verdict"] and summary["operator"] == "dbar"


def test_sweep_failure_exit_1(tmp_path):
    argv = ["sweep", "--preset", "semiflat", "--grid", "16x64", "--s", "0.4,0.2", "--m", "2",
            "--out", str(tmp_path)]
    assert main(argv) == 1


def test_localize_and_curvature(tmp_path):
    assert main(["localize", "--grid", "32x64", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "localize.csv")
    assert rows[0] == ["s", "C", "fraction"] and len(rows) == 3
    assert main(["curvature", "--preset", "nonsemiflat", "--grid", "64x32",
                 "--out", str(tmp_path)]) == 0
    verdict = json.loads((tmp_path / "curvature.json").read_text())
    assert verdict["verdict"] == "unbounded-below" and verdict["consistent"]


def test_fmt_twelve_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(np.float64(2.0)) == "2"
    assert fmt(True) == "true"

import json

import numpy as np
import pytest

from pertboot import RegressionData
from pertboot.cli import main
from pertboot.io import CsvFormatError, load_csv, load_design_csv, make_manifest, write_csv


@pytest.fixture
def csv_file(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    y = 1 + 2 * x + rng.exponential(size=40) - 1
    path = tmp_path / "d.csv"
    path.write_text("y,x\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(y, x)))
    return path


def test_load_csv_example(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("y,x\n1,0\n2,1\n3,2\n")
    d = load_csv(p, "y", intercept=True)
    np.testing.assert_array_equal(d.X, [[1, 0], [1, 1], [1, 2]])
    np.testing.assert_array_equal(d.y, [1, 2, 3])


def test_missing_response_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("y,x\n1,0\n2,1\n3,2\n")
    with pytest.raises(CsvFormatError, match="'resp'"):
        load_csv(p, "resp")


@pytest.mark.parametrize("cell", ["NaN", "abc", "inf"])
def test_bad_cell_cites_location(tmp_path, cell):
    p = tmp_path / "t.csv"
    p.write_text(f"y,x\n1,0\n2,{cell}\n3,2\n")
    with pytest.raises(CsvFormatError, match=r"line 3, column 'x'"):
        load_csv(p, "y")


def test_too_few_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("y,x\n1,0\n2,1\n")
    with pytest.raises(Exception, match="n > p"):
        load_csv(p, "y", intercept=True)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    d = RegressionData(rng.normal(size=(25, 3)), rng.normal(size=25) * 1e-7)
    write_csv(d, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv", "y")
    np.testing.assert_array_equal(back.X, d.X)
    np.testing.assert_array_equal(back.y, d.y)
    assert load_design_csv(tmp_path / "r.csv").shape == (25, 4)


def test_manifest_hash_is_stable():
    m1 = make_manifest("simulate", ["simulate"], b"[scenario]\nn=5\n", 4)
    m2 = make_manifest("simulate", ["other"], b"[scenario]\nn=5\n", 4)
    assert m1.config_hash == m2.config_hash and len(m1.config_hash) == 64
    assert "numpy" in m1.versions


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_fit(capsys, csv_file):
    code, out, _ = run(capsys, "fit", "--data", str(csv_file), "--response", "y", "--intercept")
    assert code == 0
    res = json.loads(out)
    assert res["p"] == 2 and res["converged"]


def test_cli_bootstrap_and_reproducibility(capsys, csv_file, tmp_path):
    args = ["bootstrap", "--data", str(csv_file), "--response", "y", "--intercept", "--pivot", "htilde", "--B", "400", "--seed", "7"]
    code, out1, _ = run(capsys, *args, "--dump-pivots", str(tmp_path / "piv.csv"), "--out", str(tmp_path / "o"))
    assert code == 0
    res = json.loads(out1)
    assert set(res) >= {"ci", "pivot_quantiles", "rejection_rate"}
    assert len(res["ci"]) == 2 and res["rejection_rate"] == 0
    assert np.loadtxt(tmp_path / "piv.csv", delimiter=",", skiprows=1).shape == (400, 2)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "bootstrap"
    code, out2, _ = run(capsys, *args)
    assert json.loads(out2) == res


@pytest.mark.parametrize("engine,pivot", [("residual", "h"), ("wild", "hbreve")])
def test_cli_other_engines(capsys, csv_file, engine, pivot):
    code, out, _ = run(capsys, "bootstrap", "--data", str(csv_file), "--response", "y", "--intercept", "--engine", engine, "--B", "300", "--seed", "1")
    assert code == 0 and json.loads(out)["engine"] == engine
    code, _, err = run(capsys, "bootstrap", "--data", str(csv_file), "--response", "y", "--engine", engine, "--pivot", "f", "--B", "300", "--seed", "1")
    assert code == 1 and pivot in err


def test_cli_requires_seed(capsys, caplog, csv_file):
    code, _, err = run(capsys, "bootstrap", "--data", str(csv_file), "--response", "y", "--B", "300")
    assert code == 1 and "--seed" in err
    code, out, err = run(capsys, "bootstrap", "--data", str(csv_file), "--response", "y", "--B", "300", "--entropy")
    assert code == 0 and "entropy seed" in caplog.text


def test_cli_usage_errors(capsys, csv_file):
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "fit", "--data", str(csv_file))[0] == 1
    code, _, err = run(capsys, "fit", "--data", str(csv_file), "--response", "nope")
    assert code == 1 and "'nope'" in err
    assert run(capsys, "fit", "--help")[0] == 0


def test_cli_numerical_failure(capsys, tmp_path):
    p = tmp_path / "exact.csv"
    p.write_text("y,x\n" + "".join(f"{1 + 2 * i},{i}\n" for i in range(8)))
    code, _, err = run(capsys, "bootstrap", "--data", str(p), "--response", "y", "--intercept", "--B", "200", "--seed", "1")
    assert code == 2 and "numerical failure" in err


def test_cli_simulate(capsys, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text(
        '[scenario]\nn = 30\nseed = 4\nM = 200\nB = 200\nn_outer = 3\nmethods = ["perturb-naive", "perturb-modified"]\n'
        '[errors]\nlaw = "centered-exponential"\n'
    )
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0
    rep = json.loads(out)
    assert rep["n_outer_done"] == 3
    assert (tmp_path / "o" / "report.csv").exists() and (tmp_path / "o" / "manifest.json").exists()


def test_cli_simulate_bad_key(capsys, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[scenario]\nn = 30\nseed = 1\nbogus_key = 3\n")
    code, _, err = run(capsys, "simulate", "--config", str(cfg))
    assert code == 1 and "scenario.bogus_key" in err


def test_cli_simulate_needs_seed(capsys, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[scenario]\nn = 30\n")
    assert run(capsys, "simulate", "--config", str(cfg))[0] == 1


def test_cli_edgeworth(capsys):
    code, out, _ = run(capsys, "edgeworth", "--n", "100", "--sigma", "1", "--third-moment", "2", "--grid=-1:1:1")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[1] == "x,density,cdf" and len(lines) == 5
    assert "b11=-1.0 b31=-4.0" in lines[0]


def test_cli_edgeworth_simple_regression(capsys, csv_file):
    code, out, _ = run(capsys, "edgeworth", "--model", "simple-regression", "--data", str(csv_file), "--intercept", "--gamma1", "2")
    assert code == 0 and out.splitlines()[0] == "coordinate,b11"


def test_cli_diagnose(capsys, csv_file):
    code, out, _ = run(capsys, "diagnose", "--data", str(csv_file), "--response", "y", "--intercept")
    assert code == 0
    res = json.loads(out)
    assert res["design"]["rank_z"] == 3 and "naive_studentization_gap" in res

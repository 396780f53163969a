import csv
import json

import numpy as np
import pytest

from lpsparse import harness
from lpsparse.cli import main
from lpsparse.datagen import Problem, gen_experiment1, save_bundle
from lpsparse.estimator import EstimatorConfig, estimate, oracle_lse
from lpsparse.io import read_vector_csv, sha256


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def support_of(out):
    return tuple(int(r["index"]) for r in read_rows(out / "support.csv"))


def test_estimate_noiseless_fixture(tmp_path):
    p = gen_experiment1(60, 3)
    save_bundle(Problem(a=p.a, y=p.a @ p.x_true, x_true=p.x_true), tmp_path / "in")
    assert main(["estimate", "--input", str(tmp_path / "in"), "--lambda", "0.5", "--out-dir", str(tmp_path / "o")]) == 0
    assert support_of(tmp_path / "o") == p.true_support
    np.testing.assert_allclose(read_vector_csv(tmp_path / "o" / "estimate.csv"), p.x_true, atol=1e-8)


def test_estimate_experiment1_fixture_round_trip(tmp_path):
    assert main(["generate", "--experiment", "exp1", "--N", "500", "--seed", "0", "--out-dir", str(tmp_path / "b")]) == 0
    assert main(["estimate", "--input", str(tmp_path / "b"), "--epsilon", "1/3", "--out-dir", str(tmp_path / "o")]) == 0
    assert support_of(tmp_path / "o") == (0, 1, 4)
    p = gen_experiment1(500, 0)
    in_process = estimate(p.a, p.y, EstimatorConfig(epsilon=1 / 3))
    x_cli = read_vector_csv(tmp_path / "o" / "estimate.csv")
    assert x_cli.tobytes() == in_process.x_rels.tobytes()
    np.testing.assert_array_equal(x_cli, oracle_lse(p.a, p.y, (0, 1, 4)).x)
    trace = json.loads((tmp_path / "o" / "trace.json").read_text())
    assert trace["support_lp"] == [0, 1, 4]
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["outputs"]["estimate.csv"] == sha256(tmp_path / "o" / "estimate.csv")


def test_estimate_missing_y_is_parse_error(tmp_path, capsys):
    save_bundle(gen_experiment1(20, 0), tmp_path)
    (tmp_path / "y.csv").unlink()
    assert main(["estimate", "--input", str(tmp_path), "--epsilon", "0.3", "--out-dir", str(tmp_path / "o")]) == 2
    assert "y.csv" in capsys.readouterr().err


def test_estimate_flag_exclusivity(tmp_path):
    save_bundle(gen_experiment1(20, 0), tmp_path)
    base = ["estimate", "--input", str(tmp_path), "--out-dir", str(tmp_path / "o")]
    assert main(base) == 1
    assert main(base + ["--epsilon", "0.3", "--lambda", "1"]) == 1
    assert main(base + ["--epsilon", "1.5"]) == 1


def test_estimate_rank_deficient_exit_code(tmp_path):
    a = np.ones((12, 2))
    save_bundle(Problem(a=a, y=np.ones(12), x_true=np.zeros(2)), tmp_path)
    assert main(["estimate", "--input", str(tmp_path), "--lambda", "0.1", "--out-dir", str(tmp_path / "o")]) == 3


def test_exp1_schema(tmp_path):
    out = tmp_path / "e"
    code = main(["exp1", "--n-grid", "30,60", "--trials", "3", "--out-dir", str(out)])
    assert code == 0
    with open(out / "mse.csv") as fh:
        assert fh.readline().strip() == "N,method,mse,trials"
    rows = read_rows(out / "mse.csv")
    assert {r["method"] for r in rows} == {"LSE", "LP_RELSE", "ORACLE_LSE", "LASSO", "ADALASSO"}
    tidy = read_rows(out / "report.csv")
    assert set(tidy[0]) == {"N", "method", "metric", "value", "trials"}
    assert (out / "mse.png").exists() and (out / "support.png").exists()
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 0 and meta["n_grid"] == [30, 60]


def test_exp2_oracle_match_at_500(tmp_path):
    out = tmp_path / "e2"
    assert main(["exp2", "--N", "500", "--trials", "50", "--no-plots", "--epsilons", "0.5", "--out-dir", str(out)]) == 0
    tidy = read_rows(out / "report.csv")
    rate = [float(r["value"]) for r in tidy if r["method"] == "LP_RELSE" and r["metric"] == "oracle_match_rate"]
    assert rate[0] >= 0.98


@pytest.mark.parametrize("argv", [["exp1", "--trials", "0"], ["exp1", "--n-grid", "0,5"], ["exp2", "--methods", "SCAD"]])
def test_usage_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(argv + ["--out-dir", str(tmp_path)])
    assert info.value.code == 1


def test_path_default_demo(tmp_path):
    assert main(["path", "--lambda-grid", "0,0.5,1,1.5,2,2.5", "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "path.csv")
    assert [float(rows[0][f"x{k}"]) for k in range(4)] == [2.0, 0.5, -1.0, -1.5]
    assert all(float(rows[-1][f"x{k}"]) == 0.0 for k in range(4))
    assert float(rows[1]["x1"]) == 0.0


def test_check_gram_passes(tmp_path, capsys):
    assert main(["check", "gram", "--N", "100000", "--out-dir", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_check_feasibility_trivial_lambda(tmp_path):
    assert main(["check", "feasibility", "--lambda", "10", "--trials", "50", "--out-dir", str(tmp_path)]) == 0
    row = read_rows(tmp_path / "check_feasibility.csv")[0]
    assert float(row["frequency"]) == 1.0


def test_check_lemma7_and_lemma1(tmp_path):
    assert main(["check", "lemma7", "--trials", "200", "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "check_lemma7.csv")
    assert [int(r["violations"]) for r in rows] == [0, 0]
    assert main(["check", "lemma1", "--trials", "50", "--out-dir", str(tmp_path)]) == 0


def test_check_lemma2_needs_trials(tmp_path):
    assert main(["check", "lemma2", "--trials", "10", "--out-dir", str(tmp_path)]) == 1


def test_check_violation_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(harness, "lse_identity_deviation", lambda p, x: 1.0)
    assert main(["check", "lemma1", "--trials", "3", "--out-dir", str(tmp_path)]) == 4
    err = capsys.readouterr().err
    assert "1.0" in err and "1e-08" in err


def test_cv_single_candidate(tmp_path):
    argv = ["cv", "--param", "epsilon", "--candidates", "0.25", "--N", "40", "--trials", "3", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    rows = read_rows(tmp_path / "cv.csv")
    assert len(rows) == 1 and rows[0]["chosen"] == "1"
    assert len(read_rows(tmp_path / "cv_test_errors.csv")) == 3
    assert (tmp_path / "cv_boxplots.png").exists()

import json

import numpy as np
import pytest

from pdmpjump.cli import main
from pdmpjump.realdata import write_synthetic_lineages


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_writes_rows_and_manifest(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--n", "1000", "--seed", "1", "--out", str(out)]) == 0
    tab = np.loadtxt(out, delimiter=",", skiprows=1)
    assert tab.shape == (1000, 5)
    assert out.read_text().splitlines()[0] == "k,z,z_minus,s,t"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 1 and man["status"] == "ok"
    assert man["backend"] in ("cython", "python") and len(man["config_hash"]) == 64
    again = tmp_path / "again.csv"
    main(["simulate", "--n", "1000", "--seed", "1", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["simulate", "--n", "10"]) == 2
    assert _err(capsys)["error"] == "UsageError"
    assert main(["estimate", "--estimator", "ks", "--out", str(tmp_path / "e.csv")]) == 2
    assert "bandwidth" in _err(capsys)["message"]
    assert main(["theory", "--grid", "1:2", "--out", str(tmp_path / "t.csv")]) == 2
    assert main([]) == 2


def test_domain_error_exit_1(tmp_path, capsys):
    out = tmp_path / "x" / "traj.csv"
    out.parent.mkdir()
    assert main(["simulate", "--n", "0", "--seed", "1", "--out", str(out)]) == 1
    assert _err(capsys)["error"] == "ParameterOutOfRange"
    man = json.loads((out.parent / "manifest.json").read_text())
    assert man["status"] == "error"
    assert main(["realdata", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "r")]) == 1


def test_theory_estimate_adaptive(tmp_path):
    assert main(["theory", "--grid", "0.5:2:0.5", "--out", str(tmp_path / "th.csv")]) == 0
    th = np.genfromtxt(tmp_path / "th.csv", delimiter=",", names=True)
    assert th["x"].tolist() == [0.5, 1.0, 1.5, 2.0]
    traj = tmp_path / "traj.csv"
    main(["simulate", "--n", "5000", "--seed", "2", "--out", str(traj)])
    assert main(["estimate", "--estimator", "ks", "--bandwidth", "0.2", "--trajectory", str(traj),
                 "--grid", "1:2:0.5", "--out", str(tmp_path / "est.csv")]) == 0
    est = np.genfromtxt(tmp_path / "est.csv", delimiter=",", names=True)
    assert np.allclose(est["estimate"], est["x"], atol=0.3)
    assert main(["estimate", "--estimator", "amg", "--bandwidth-s", "0.1", "--bandwidth-t", "0.3",
                 "--trajectory", str(traj), "--grid", "1:2:0.5", "--out", str(tmp_path / "amg.csv")]) == 0
    assert main(["adaptive", "--estimator", "ks", "--trajectory", str(traj),
                 "--out", str(tmp_path / "ad.csv")]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert 0 <= fit["M_star"] <= 25


def test_realdata_and_validate(tmp_path):
    lineages = tmp_path / "lin"
    write_synthetic_lineages(lineages, n_lineages=2, jumps=600, seed=3)
    out = tmp_path / "rd"
    assert main(["realdata", "--input", str(lineages), "--out", str(out), "--jumps", "300",
                 "--last", "3000"]) == 0
    summary = json.loads((out / "theta.json").read_text())
    assert summary["theta"] == pytest.approx(0.025, abs=1e-9)
    assert summary["divisions"] == 1200
    val = tmp_path / "val"
    assert main(["validate", "--input", str(lineages), "--rate-curve", str(out / "rate_curve.csv"),
                 "--out", str(val), "--jumps", "300", "--last", "3000"]) == 0
    assert 0 <= json.loads((val / "validation.json").read_text())["ks_distance"] <= 1


def test_bench_small(tmp_path):
    cfg = {"replicates": 2, "n_values": [500], "kappa": 0.4, "stages": ["evaluation", "variance"],
           "bandwidths": {"500": {"k": 0.2, "ks": 0.2, "amgo": [0.1, 0.3], "amg": [0.1, 0.3]}},
           "kappa_grid": [0.4], "sigma_grid": [0.5, 3.0, 0.05]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["bench", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert "pointwise" in report["aggregates"]
    assert main(["bench", "--config", str(path), "--jobs", "0", "--out", str(tmp_path / "c")]) == 2


def test_creates_missing_output_directory(tmp_path):
    out = tmp_path / "deep" / "er" / "traj.csv"
    assert main(["simulate", "--n", "50", "--seed", "3", "--out", str(out)]) == 0
    assert out.exists() and (out.parent / "manifest.json").exists()

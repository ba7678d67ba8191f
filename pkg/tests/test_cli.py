import hashlib
import json

import numpy as np
import pytest
from scipy.integrate import trapezoid

from mhmvol.cli import main

SIM = ["simulate", "--model", "mhm", "--p", "5", "--q", "6", "--beta", "0.01", "--gamma", "0.05"]


def _run(argv, capsys=None):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err if capsys else ""
    return code, err


@pytest.fixture(scope="module")
def prices(tmp_path_factory):
    # 10^6 simulated trading days of the canonical MHM parameters
    out = tmp_path_factory.mktemp("sim")
    code = main(SIM + ["--dt", "0.1", "--steps", "10010000", "--burn-in", "10000", "--save-every", "10",
                       "--seed", "3", "--emit-prices", "--output-dir", str(out)])
    assert code == 0
    return out / "prices.csv"


def test_simulate_writes_path_and_manifest(tmp_path):
    code, _ = _run(SIM + ["--steps", "100000", "--seed", "7", "--output-dir", tmp_path])
    assert code == 0
    lines = (tmp_path / "path.csv").read_text().splitlines()
    assert lines[0] == "step,v,x" and len(lines) == 100_002
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 7
    assert man["config"]["scheme"] == "full_truncation"
    assert man["params"]["kappa_M_sq"] == pytest.approx(0.02)
    assert man["artifacts"]["path.csv"] == hashlib.sha256((tmp_path / "path.csv").read_bytes()).hexdigest()


def test_simulate_same_seed_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(SIM + ["--steps", "20000", "--seed", "11", "--output-dir", str(d)]) == 0
    assert (a / "path.csv").read_bytes() == (b / "path.csv").read_bytes()


def test_simulate_rejects_q_at_one(tmp_path, capsys):
    code, err = _run(["simulate", "--model", "mhm", "--p", "5", "--q", "1", "--beta", "0.01", "--gamma", "0.05",
                      "--output-dir", tmp_path], capsys)
    assert code == 2
    assert "--q" in err and "q" in err and "> 1" in err
    assert not (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("extra, flag", [(["--dt", "-1"], "--dt"), (["--rho", "2"], "--rho"),
                                          (["--scheme", "milstein"], "--scheme"),
                                          (["--burn-in", "500", "--steps", "100"], "--burn-in")])
def test_simulate_flag_validation_names_flag(tmp_path, capsys, extra, flag):
    code, err = _run(SIM + extra + ["--output-dir", tmp_path], capsys)
    assert code == 2 and flag in err


def test_runtime_failure_exits_one(tmp_path, capsys):
    code, err = _run(["simulate", "--model", "mm", "--gamma", "0.05", "--theta", "0.01", "--kappa-m-sq", "50",
                      "--dt", "1", "--steps", "200000", "--scheme", "reflection", "--output-dir", tmp_path], capsys)
    assert code == 1 and "failed" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 4\n[simulate]\nsteps = 5000\nsave_every = 10\n')
    out = tmp_path / "o"
    assert main(SIM + ["--config", str(cfg), "--output-dir", str(out)]) == 0
    assert len((out / "path.csv").read_text().splitlines()) == 502
    assert main(SIM + ["--config", str(cfg), "--steps", "3000", "--output-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["steps"] == 3000 and man["seed"] == 4
    assert len((out / "path.csv").read_text().splitlines()) == 302


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[simulate]\nstepz = 5\n")
    code, err = _run(SIM + ["--config", cfg, "--output-dir", tmp_path], capsys)
    assert code == 2 and "stepz" in err


def test_fit_tau_list_gives_one_record_each(tmp_path):
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.standard_t(5, 1200) * 0.01)
    dates = (np.datetime64("2001-01-01") + np.arange(1200)).astype(str)
    rows = ["date,close"] + [f"{d},{100 * np.exp(v):.10f}" for d, v in zip(dates, x)]
    csv = tmp_path / "p.csv"
    csv.write_text("\n".join(rows) + "\n")
    code = main(["fit", "--input", str(csv), "--tau", "1,5,10,20,40", "--gamma", "0.05", "--method", "mle",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    recs = json.loads((tmp_path / "fit.json").read_text())
    assert [r["tau"] for r in recs] == [1, 5, 10, 20, 40]
    assert all(r["model"].lower() == "mhm" and r["kappa_M_sq"] is not None for r in recs)


def test_fit_malformed_csv_reports_row(tmp_path, capsys):
    csv = tmp_path / "bad.csv"
    csv.write_text("date,close\n2020-01-01,100\n2020-01-02,100.5\n2020-01-03,oops\n")
    code, err = _run(["fit", "--input", csv, "--output-dir", tmp_path], capsys)
    assert code == 2 and "row 4" in err


def test_fit_missing_input_is_usage_error(tmp_path, capsys):
    code, err = _run(["fit", "--output-dir", tmp_path], capsys)
    assert code == 2 and "--input" in err


def test_fit_round_trip_on_simulated_prices(prices, tmp_path):
    code = main(["fit", "--input", str(prices), "--output-dir", str(tmp_path)])
    assert code == 0
    (rec,) = json.loads((tmp_path / "fit.json").read_text())
    assert rec["p"] == pytest.approx(5.0, rel=0.15)
    assert rec["q"] == pytest.approx(6.0, rel=0.15)
    assert rec["beta"] == pytest.approx(0.01, rel=0.15)
    assert rec["ks"] <= 0.01
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["gamma_source"] == "autocovariance fit"
    assert rec["gamma"] == pytest.approx(0.05, rel=0.15)


def test_density_trapezoid_mass(tmp_path):
    code = main(["density", "--model", "mhm", "--p", "5", "--q", "6", "--beta", "0.01", "--output-dir",
                 str(tmp_path)])
    assert code == 0
    tab = np.loadtxt(tmp_path / "density.csv", delimiter=",", skiprows=1)
    assert trapezoid(tab[:, 1], tab[:, 0]) == pytest.approx(1.0, abs=1e-4)
    assert json.loads((tmp_path / "manifest.json").read_text())["trapezoid_mass"] == pytest.approx(1.0, abs=1e-4)


def test_density_methods_agree(tmp_path):
    base = ["density", "--model", "mhm", "--p", "5", "--q", "6", "--beta", "0.01", "--z-max", "0.5",
            "--n-points", "41"]
    assert main(base + ["--method", "closed", "--output-dir", str(tmp_path / "c")]) == 0
    assert main(base + ["--method", "pd", "--output-dir", str(tmp_path / "p")]) == 0
    c = np.loadtxt(tmp_path / "c" / "density.csv", delimiter=",", skiprows=1)[:, 1]
    p = np.loadtxt(tmp_path / "p" / "density.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.max(np.abs(c / p - 1)) < 1e-6


def test_density_requires_model(tmp_path, capsys):
    code, err = _run(["density", "--p", "5", "--q", "6", "--beta", "0.01", "--output-dir", tmp_path], capsys)
    assert code == 2 and "--model" in err


def test_moments_of_self_simulated_data(prices, tmp_path):
    code = main(["moments", "--model", "mhm", "--p", "5", "--q", "6", "--beta", "0.01", "--input", str(prices),
                 "--output-dir", str(tmp_path)])
    assert code == 0
    out = json.loads((tmp_path / "moments.json").read_text())
    assert out["theoretical"]["z2"] == pytest.approx(0.01)
    assert out["reduced"]["z2"] == pytest.approx(1.0, abs=0.05)
    assert out["reduced"]["z4"] == pytest.approx(1.0, abs=0.05)


def test_rv_gamma_override(prices, tmp_path):
    code = main(["rv", "--input", str(prices), "--gamma", "0.042", "--t-grid", "1:60", "--output-dir",
                 str(tmp_path)])
    assert code == 0
    slopes = json.loads((tmp_path / "rv_slopes.json").read_text())
    assert slopes["gamma"] == 0.042 and slopes["split_T"] == pytest.approx(1 / 0.042)
    assert json.loads((tmp_path / "manifest.json").read_text())["gamma_source"] == "flag"
    head = (tmp_path / "rv_curve.csv").read_text().splitlines()[0]
    assert head == "T,ratio,f_gamma_T"


def test_rv_slopes_on_simulated_prices(prices, tmp_path):
    grid = "1,2,3,400,500,600,800,1000,1500,2000"
    code = main(["rv", "--input", str(prices), "--gamma", "0.05", "--t-grid", grid, "--split-t", "100",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    s = json.loads((tmp_path / "rv_slopes.json").read_text())
    assert -0.1 < s["slope_small"] < 0.05
    assert -1.15 < s["slope_large"] < -0.85


def test_rv_empty_grid(prices, tmp_path, capsys):
    code, err = _run(["rv", "--input", prices, "--t-grid", "", "--output-dir", tmp_path], capsys)
    assert code == 2 and "--t-grid" in err

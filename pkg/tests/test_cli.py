import json
import os

import numpy as np
import pytest

from conftest import write_chargeoff_csv
from stochcorr import cli
from stochcorr.cli import FORECAST_COLUMNS, REPORT_COLUMNS, DataError, ingest_csv, main
from stochcorr.config import default_config
from stochcorr.inference import DependenceFit


def small_config(tmp_path, **fit):
    d = default_config().to_dict()
    d.update(seed=5, n_rho_draws=30, interpolation_nodes=7, fpt_grid_points=16,
             horizons_years=[0.2], sweeps=[{"parameter": "GbmSigma", "values": [0.1]}])
    d["fit"].update(multistart=1, eta_sensitivity=[1.0, 10.0], **fit)
    d["forecast"].update(n_rho_draws=30, interpolation_nodes=7, fpt_grid_points=16)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def data_lines(path):
    return [ln for ln in open(path).read().splitlines() if not ln.startswith("#")]


# ---------------------------------------------------------------- ingestion

def test_two_row_file(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("date,A,B\n2008Q3,0.01,0.02\n2008-12-31,0.015,0.03\n")
    series = ingest_csv(p)
    assert [s.category for s in series] == ["A", "B"]
    assert len(series[0]) == 2 and series[0].quarters == ((2008, 3), (2008, 4))
    assert series[1].rates == (0.02, 0.03)


def test_zero_rate_floored_with_one_warning(tmp_path, caplog):
    p = tmp_path / "d.csv"
    p.write_text("date,A\n2008Q3,0.0\n2008Q4,0.01\n2009Q1,0.0\n")
    with caplog.at_level("WARNING"):
        (s,) = ingest_csv(p, epsilon_floor=1e-6)
    assert s.n_floored == 2
    assert len([r for r in caplog.records if "floored" in r.message]) == 1
    assert s.observations(1e-6).rates[0] == 1e-6


def test_percent_auto_detection_and_flags(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("date,A,B,C (percent)\n2008Q3,2.5,0.02,0.5\n2008Q4,1.0,0.03,0.9\n")
    a, b, c = ingest_csv(p)
    assert a.rates == (0.025, 0.01)      # max > 1: percent
    assert b.rates == (0.02, 0.03)       # fraction
    assert c.category == "C" and c.rates == pytest.approx((0.005, 0.009))
    a2, b2, _ = ingest_csv(p, percent=True)
    assert b2.rates == pytest.approx((0.0002, 0.0003))


@pytest.mark.parametrize("body,match", [
    ("date,A\n2008Q3,0.01\n2008Q3,0.02\n", ":3:.*chronological"),
    ("date,A\n2008Q4,0.01\n2008Q3,0.02\n", ":3:.*chronological"),
    ("date,A\n2008Q3,0.01\n2008Q4,abc\n", ":3:"),
    ("date,A\n2008Q3,0.01,0.3\n", ":2: expected 2 fields"),
    ("date,A\n2008-11-30,0.01\n", ":2:.*quarter end"),
    ("date,A\n08/31/2008,0.01\n", ":2:.*unrecognised"),
    ("quarter,A\n2008Q3,0.01\n", ":1:"),
    ("date,A,A\n2008Q3,0.01,0.02\n", "unique"),
    ("date,A\n", "no data rows"),
    ("date,A\n2008Q3,150\n", "outside"),
])
def test_malformed_inputs(tmp_path, body, match):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=match):
        ingest_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "none.csv")


# ---------------------------------------------------------------- commands

def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1, "unknown_key": 3}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown_key" in capsys.readouterr().err


def test_data_error_exit_code(tmp_path):
    cfg = small_config(tmp_path)
    bad = tmp_path / "d.csv"
    bad.write_text("date,A\n2008Q4,0.01\n2008Q3,0.02\n")
    assert main(["fit", "--config", cfg, "--data", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["report", "--config", cfg, "--out", str(tmp_path / "empty")]) == 3


def test_simulate_is_byte_identical(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["--config", cfg, "simulate", "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("sweep_GbmSigma.csv", "sweep_GbmSigma.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head = (tmp_path / "a" / "sweep_GbmSigma.csv").read_text().splitlines()
    assert head[0].startswith("# config_sha256=") and head[1] == "# seed=5"
    assert main(["simulate", "--config", cfg, "--seed", "6", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "sweep_GbmSigma.csv").read_bytes() != (
        tmp_path / "a" / "sweep_GbmSigma.csv").read_bytes()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = small_config(tmp)
    data = write_chargeoff_csv(tmp / "fed.csv", {"Residential": (0.01, 0.1), "Consumer": (0.04, 0.2)},
                               n_quarters=40)
    out = tmp / "out"
    codes = [main(["fit", "--config", cfg, "--data", str(data), "--out", str(out)]),
             main(["report", "--config", cfg, "--out", str(out)]),
             main(["forecast", "--config", cfg, "--out", str(out), "--allow-unconverged"])]
    return tmp, cfg, data, out, codes


def test_pipeline_outputs(pipeline):
    tmp, cfg, data, out, codes = pipeline
    assert codes[1] == 0 and codes[2] == 0
    assert codes[0] in (0, 4)
    doc = json.load(open(out / "fit_Consumer.json"))
    assert doc["version"] == cli.FIT_VERSION and doc["provenance"]["seed"] == 5
    assert 0 < doc["p_bar"] < 1 and len(doc["quarters"]) == 40
    DependenceFit.from_dict(doc["fit"])
    sens = json.load(open(out / "eta_sensitivity_Consumer.json"))
    assert set(sens["by_eta"]) == {"1.0", "10.0"}
    assert data_lines(out / "summary.csv")[0] == ",".join(REPORT_COLUMNS)
    assert data_lines(out / "forecast.csv")[0] == ",".join(FORECAST_COLUMNS)
    assert len(data_lines(out / "forecast.csv")) == 3


def test_fit_and_forecast_deterministic(pipeline):
    tmp, cfg, data, out, _ = pipeline
    out2 = tmp / "out2"
    main(["fit", "--config", cfg, "--data", str(data), "--out", str(out2)])
    main(["forecast", "--config", cfg, "--out", str(out2), "--allow-unconverged"])
    for name in sorted(os.listdir(out2)):
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name


def test_nonconvergence_exit_code_and_error_file(tmp_path, monkeypatch, pipeline):
    _, cfg, data, _, _ = pipeline
    real = cli.fit_dependence_path

    def never(obs, config):
        f = real(obs, config)
        return DependenceFit(**{**f.__dict__, "converged": False, "message": "forced"})

    monkeypatch.setattr(cli, "fit_dependence_path", never)
    out = tmp_path / "o"
    assert main(["fit", "--config", cfg, "--data", str(data), "--out", str(out)]) == 4
    err = json.load(open(out / "errors.json"))
    assert {e["category"] for e in err["errors"]} == {"Residential", "Consumer"}
    # without the override, forecasting from unconverged fits is a numerical error
    assert main(["forecast", "--config", cfg, "--out", str(out)]) == 4
    assert json.load(open(out / "errors.json"))["errors"][0]["error"]


def test_constant_rho_fit_report_recovers_level(tmp_path):
    # fit + report on synthetic constant rho = 0.2 data, T = 200 quarters
    d = default_config().to_dict()
    d.update(seed=1)
    d["fit"].update(eta_sensitivity=[10.0])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(d))
    data = write_chargeoff_csv(tmp_path / "d.csv", {"Synthetic": (0.03, 0.2)}, n_quarters=200,
                               seed=21, start_year=1960)
    out = tmp_path / "o"
    main(["fit", "--config", str(cfg), "--data", str(data), "--out", str(out)])
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    row = data_lines(out / "summary.csv")[1].split(",")
    assert abs(float(row[1]) - 0.2) < 0.08

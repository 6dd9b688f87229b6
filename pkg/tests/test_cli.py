"""End-to-end tests of the gevgp command line."""

import json
import os

import pandas as pd
import pytest

from gevgp.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, build_parser, run
from gevgp.dataio.store import save_fit

pytestmark = pytest.mark.integration


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    """Run every command from an empty directory without GEVGP_* variables."""
    for key in [k for k in os.environ if k.startswith("GEVGP_")]:
        monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "sim"

    code = run(["simulate", "--side", "3", "--n-per-site", "2", "--seed", "4", "--output-dir", str(out), "-q"])

    assert code == EXIT_OK
    data = pd.read_csv(out / "data.csv")
    truth = pd.read_csv(out / "truth.csv")
    assert list(data.columns) == ["lon", "lat", "values"]
    assert len(data) == 9
    assert list(truth.columns) == ["lon", "lat", "a", "b"]
    manifest = json.loads((out / "manifest-simulate.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 4
    assert manifest["config"]["side"] == 3
    assert len(manifest["outputs"]) == 2


def test_simulate_is_reproducible(tmp_path):
    run(["simulate", "--side", "3", "--seed", "7", "--output-dir", str(tmp_path / "a"), "-q"])
    run(["simulate", "--side", "3", "--seed", "7", "--output-dir", str(tmp_path / "b"), "-q"])

    assert (tmp_path / "a" / "data.csv").read_text() == (tmp_path / "b" / "data.csv").read_text()


def test_fit_on_empty_dataset(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    path.write_text("")

    code = run(["fit", "--data", str(path), "-q"])

    assert code == EXIT_VALIDATION
    assert "ERROR:data:" in capsys.readouterr().err
    assert not (tmp_path / "manifest-fit.json").exists()


def test_fit_without_data(capsys):
    code = run(["fit", "-q"])

    assert code == EXIT_VALIDATION
    assert "no input data" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text("colour: red\n")

    code = run(["simulate", "--config", str(path), "-q"])

    assert code == EXIT_VALIDATION
    assert "ERROR:config:" in capsys.readouterr().err


def test_out_of_range_option(capsys):
    code = run(["simulate", "--side", "1", "-q"])

    assert code == EXIT_VALIDATION
    assert "ERROR:config:" in capsys.readouterr().err


def test_missing_fit_file(tmp_path, capsys):
    code = run(["sample", "--fit", str(tmp_path / "nothing.npz"), "-q"])

    assert code == EXIT_VALIDATION
    assert "ERROR:data:" in capsys.readouterr().err


def test_grid(tmp_path):
    records = tmp_path / "records.csv"
    rows = [f"{1.0 + 0.01 * k},{1.0},{float(k)}" for k in range(25)]
    rows += [f"{5.0},{5.0},{float(k)}" for k in range(3)]
    records.write_text("lon,lat,value\n" + "\n".join(rows) + "\n")

    code = run(["grid", "--records", str(records), "--cell-deg", "3", "--min-records", "20",
                "--bbox", "0", "6", "0", "6", "-q"])

    assert code == EXIT_OK
    cells = pd.read_csv(tmp_path / "cells.csv")
    assert len(cells) == 1
    assert cells.loc[0, "n_records"] == 25
    assert cells.loc[0, "max"] == 24.0
    assert (cells.loc[0, "lon"], cells.loc[0, "lat"]) == (1.5, 1.5)


def test_commands_keep_separate_manifests(tmp_path):
    """Test that two commands run in one directory both keep their manifest."""
    assert run(["simulate", "--side", "3", "--seed", "4", "-q"]) == EXIT_OK
    records = tmp_path / "records.csv"
    records.write_text("lon,lat,value\n1.0,1.0,2.0\n1.2,1.1,3.0\n")

    assert run(["grid", "--records", str(records), "--cell-deg", "3", "--min-records", "1",
                "--bbox", "0", "6", "0", "6", "-q"]) == EXIT_OK

    assert json.loads((tmp_path / "manifest-simulate.json").read_text())["command"] == "simulate"
    assert json.loads((tmp_path / "manifest-grid.json").read_text())["command"] == "grid"


def test_predict_from_diffuse_fit(tmp_path, capsys, small_dataset, fit_factory):
    """Test that hyperparameter draws outside the kernel range end as a numerical error."""
    save_fit(fit_factory(small_dataset, "M2", theta_var=1e8), tmp_path / "fit.npz")
    (tmp_path / "new.csv").write_text("lon,lat\n0.5,0.5\n")

    code = run(["predict", "--coords", "new.csv", "--n-sim", "50", "-q"])

    assert code == EXIT_NUMERICAL
    assert "ERROR:numerical:" in capsys.readouterr().err


@pytest.mark.slow
def test_simulate_fit_sample_predict(tmp_path):
    """Test the full workflow on a small lattice."""
    assert run(["simulate", "--side", "4", "--n-per-site", "5", "--seed", "2", "-q"]) == EXIT_OK
    assert run(["fit", "--data", "data.csv", "--truth", "truth.csv", "--model", "M2", "-q"]) == EXIT_OK

    fit = pd.read_csv(tmp_path / "fit.csv")
    assert len(fit) == 16
    assert set(pd.read_csv(tmp_path / "theta.csv")["name"]) == {
        "log_sigma2_a", "log_lambda_a", "log_sigma2_b", "log_lambda_b"}
    metrics = pd.read_csv(tmp_path / "metrics.csv")
    assert metrics.loc[0, "mae_a"] >= 0.0

    assert run(["sample", "--n-sim", "500", "--prob-upper", "0.05", "-q"]) == EXIT_OK
    levels = pd.read_csv(tmp_path / "return_levels.csv")
    assert len(levels) == 16
    assert (levels["z_lo"] <= levels["z_hi"]).all()

    (tmp_path / "new.csv").write_text("lon,lat\n1.5,1.5\n8.0,2.0\n")
    assert run(["predict", "--coords", "new.csv", "--n-sim", "500", "-q"]) == EXIT_OK
    pred = pd.read_csv(tmp_path / "predictions.csv")
    assert len(pred) == 2
    assert (pred["y_lo"] <= pred["y_mean"]).all()
    assert (pred["y_mean"] <= pred["y_hi"]).all()

    manifest = json.loads((tmp_path / "manifest-predict.json").read_text())
    assert manifest["command"] == "predict"
    assert manifest["diagnostics"]["converged"]
    for command in ("simulate", "fit", "sample"):
        assert json.loads((tmp_path / f"manifest-{command}.json").read_text())["command"] == command

"""Test suite for core.settings module.

Unit tests for RunConfig loading and validation.
"""

import json
import os

import pytest
import yaml

from gevgp.core.errors import ConfigError
from gevgp.core.settings import RunConfig


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    """Isolate each test from GEVGP_* variables and a stray gevgp.yaml."""
    for key in list(os.environ):
        if key.startswith("GEVGP_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)


class TestRunConfig:
    """Test cases for RunConfig."""

    def test_defaults(self):
        config = RunConfig.load()

        assert config.model == "M1"
        assert config.n_sim == 10_000
        assert config.seed == 0
        assert config.jitter is None
        assert config.cell_deg == 3.0
        assert config.min_records == 20

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("GEVGP_SEED", "5")
        monkeypatch.setenv("GEVGP_JITTER", "none")

        config = RunConfig.load()

        assert config.seed == 5
        assert config.jitter is None

    def test_file_overrides_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("GEVGP_SEED", "5")
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"seed": 9, "model": "M2", "bbox": [0, 10, 0, 5]}))

        config = RunConfig.load(config_path=str(path))

        assert config.seed == 9
        assert config.model == "M2"
        assert config.bbox == [0.0, 10.0, 0.0, 5.0]

    def test_cli_overrides_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 9, "n_sim": 100}))

        config = RunConfig.load(config_path=str(path), cli_args={"seed": 3, "n_sim": None})

        assert config.seed == 3
        assert config.n_sim == 100

    def test_default_file_in_working_directory(self, tmp_path):
        (tmp_path / "gevgp.yaml").write_text("outer_tol: 1.0e-7\n")

        config = RunConfig.load(working_dir=str(tmp_path))

        assert config.outer_tol == 1e-7

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys: colour"):
            RunConfig.load(cli_args={"colour": "red"})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="n_sim"):
            RunConfig.load(cli_args={"n_sim": "lots"})

    def test_non_integer_float_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.load(cli_args={"seed": 1.5})

    @pytest.mark.parametrize("overrides", [
        {"model": "M7"},
        {"p_exp": 1.0},
        {"prob_upper": 0.0},
        {"n_sim": 0},
        {"jitter": -1.0},
        {"side": 1},
        {"lo": 5.0, "hi": 5.0},
        {"bbox": [0, 1, 2]},
        {"bbox": [1, 0, 0, 1]},
        {"kernel_form": "matern"},
    ])
    def test_out_of_range_rejected(self, overrides):
        with pytest.raises(ConfigError):
            RunConfig.load(cli_args=overrides)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(config_path=str(tmp_path / "missing.yaml"))

    def test_malformed_config_file(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- just\n- a list\n")

        with pytest.raises(ConfigError, match="mapping"):
            RunConfig.load(config_path=str(path))

    def test_save_and_reload(self, tmp_path):
        config = RunConfig.load(cli_args={"model": "M4", "seed": 11, "bbox": [0, 1, 0, 1]})
        path = tmp_path / "saved.yaml"

        config.save(path)

        assert RunConfig.load(config_path=str(path)) == config

    def test_fit_config(self):
        config = RunConfig.load(cli_args={"inner_tol": 1e-9, "workers": 2, "kernel_form": "squared_exponential"})

        fit_config = config.fit_config()

        assert fit_config.inner_tol == 1e-9
        assert fit_config.workers == 2
        assert fit_config.kernel_form == "squared_exponential"
        assert config.model_spec().name == "M1"

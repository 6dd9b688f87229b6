"""Run configuration for gevgp.

Supports multiple configuration sources with priority:
1. Command-line arguments (highest)
2. Config file (``--config`` path, else ./gevgp.yaml when present)
3. Environment variables (``GEVGP_<FIELD>``)
4. Defaults (lowest)

Unknown keys are rejected and every value is validated before any
computation starts.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import yaml

from .errors import ConfigError, DomainError
from .kernel import KERNEL_FORMS
from .laplace import FitConfig
from .model import MODEL_VARIANTS, ModelSpec

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "gevgp.yaml"
ENV_PREFIX = "GEVGP_"


def _optional(convert: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def inner(value):
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")):
            return None
        return convert(value)
    return inner


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("true", "1", "yes")
    return bool(value)


def _as_int(value) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"{value} is not an integer")
    return int(value)


def _as_bbox(value) -> List[float]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return [float(v) for v in value]


@dataclass
class RunConfig:
    """Settings for one CLI invocation."""

    # Model
    model: str = "M1"
    kernel_form: str = "exponential"
    jitter: Optional[float] = None

    # Optimizer
    inner_tol: float = 1e-8
    inner_max_iter: int = 100
    outer_tol: float = 1e-6
    outer_max_iter: int = 500
    fd_step: float = 1e-5
    workers: int = 1

    # Sampling and summaries
    n_sim: int = 10_000
    seed: int = 0
    prob_upper: float = 0.1
    p_exp: float = 0.95
    n_test: Optional[int] = None

    # Simulation
    side: int = 20
    lo: float = 0.0
    hi: float = 10.0
    n_per_site: int = 1
    true_s: float = -2.0
    gumbel: bool = False

    # Gridding
    cell_deg: float = 3.0
    min_records: int = 20
    bbox: Optional[List[float]] = None

    # IO
    data: Optional[str] = None
    output_dir: str = "."

    @classmethod
    def load(
        cls,
        config_path: Optional[str] = None,
        cli_args: Optional[Dict[str, Any]] = None,
        working_dir: str = ".",
    ) -> "RunConfig":
        """Load configuration from all sources with proper priority.

        Args:
            config_path: Explicit config file (YAML or JSON)
            cli_args: Command-line overrides; ``None`` values are ignored
            working_dir: Where to look for the default config file

        Returns:
            Validated RunConfig
        """
        config = cls()
        config._load_from_env()

        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            config._load_from_file(path)
        else:
            default = Path(working_dir) / DEFAULT_CONFIG_FILE
            if default.exists():
                config._load_from_file(default)

        if cli_args:
            config._load_from_dict({k: v for k, v in cli_args.items() if v is not None})

        config.validate()
        return config

    def _load_from_env(self):
        """Load settings from ``GEVGP_*`` environment variables."""
        values = {}
        for f in fields(self):
            raw = os.getenv(ENV_PREFIX + f.name.upper())
            if raw is not None:
                values[f.name] = raw
        if values:
            logger.debug(f"config from environment: {sorted(values)}")
            self._load_from_dict(values)

    def _load_from_file(self, file_path: Path):
        """Load settings from a YAML or JSON file."""
        try:
            text = file_path.read_text(encoding="utf-8")
            data = json.loads(text) if file_path.suffix == ".json" else yaml.safe_load(text)
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config file {file_path}: {e}") from e
        if data is None:
            return
        if not isinstance(data, dict):
            raise ConfigError(f"config file {file_path} must hold a mapping")
        logger.debug(f"config from {file_path}: {sorted(data)}")
        self._load_from_dict(data)

    def _load_from_dict(self, data: Dict[str, Any]):
        """Load settings from a dictionary, rejecting unknown keys."""
        unknown = sorted(set(data) - set(_CONVERTERS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in data.items():
            try:
                setattr(self, key, _CONVERTERS[key](value))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid value for {key}: {value!r} ({e})") from e

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        config = cls()
        config._load_from_dict(data)
        config.validate()
        return config

    def validate(self) -> None:
        """Raise ConfigError on any out-of-range field."""
        problems = []
        if self.model.upper() not in MODEL_VARIANTS:
            problems.append(f"model must be one of {', '.join(MODEL_VARIANTS)}")
        if self.kernel_form not in KERNEL_FORMS:
            problems.append(f"kernel_form must be one of {', '.join(KERNEL_FORMS)}")
        if self.jitter is not None and not (self.jitter >= 0 and math.isfinite(self.jitter)):
            problems.append("jitter must be >= 0")
        for name in ("inner_tol", "outer_tol", "fd_step", "cell_deg"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                problems.append(f"{name} must be positive")
        for name in ("inner_max_iter", "outer_max_iter", "workers", "n_sim", "n_per_site", "min_records"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if not 0 < self.prob_upper < 1:
            problems.append("prob_upper must lie in (0, 1)")
        if not 0 < self.p_exp < 1:
            problems.append("p_exp must lie in (0, 1)")
        if self.n_test is not None and self.n_test < 1:
            problems.append("n_test must be >= 1")
        if self.side < 2:
            problems.append("side must be >= 2")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            problems.append("lo must be smaller than hi")
        if not math.isfinite(self.true_s):
            problems.append("true_s must be finite")
        if self.bbox is not None:
            if len(self.bbox) != 4:
                problems.append("bbox must be [lon_min, lon_max, lat_min, lat_max]")
            elif not (self.bbox[0] < self.bbox[1] and self.bbox[2] < self.bbox[3]):
                problems.append("bbox must be well ordered")
        if problems:
            raise ConfigError("; ".join(problems))

    def model_spec(self) -> ModelSpec:
        return ModelSpec.named(self.model)

    def fit_config(self) -> FitConfig:
        try:
            return FitConfig(
                inner_tol=self.inner_tol,
                inner_max_iter=self.inner_max_iter,
                outer_tol=self.outer_tol,
                outer_max_iter=self.outer_max_iter,
                fd_step=self.fd_step,
                workers=self.workers,
                jitter=self.jitter,
                kernel_form=self.kernel_form,
            )
        except DomainError as e:
            raise ConfigError(str(e)) from e

    def save(self, file_path: Path):
        """Save settings as YAML (or JSON for a ``.json`` path)."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        data = self.to_dict()
        with open(file_path, "w", encoding="utf-8") as f:
            if file_path.suffix == ".json":
                json.dump(data, f, indent=2)
            else:
                yaml.safe_dump(data, f, sort_keys=False)

    def to_dict(self) -> Dict[str, Any]:
        """Convert settings to dictionary."""
        return {f.name: getattr(self, f.name) for f in fields(self)}


_CONVERTERS: Dict[str, Callable[[Any], Any]] = {
    "model": str,
    "kernel_form": str,
    "jitter": _optional(float),
    "inner_tol": float,
    "inner_max_iter": _as_int,
    "outer_tol": float,
    "outer_max_iter": _as_int,
    "fd_step": float,
    "workers": _as_int,
    "n_sim": _as_int,
    "seed": _as_int,
    "prob_upper": float,
    "p_exp": float,
    "n_test": _optional(_as_int),
    "side": _as_int,
    "lo": float,
    "hi": float,
    "n_per_site": _as_int,
    "true_s": float,
    "gumbel": _as_bool,
    "cell_deg": float,
    "min_records": _as_int,
    "bbox": _optional(_as_bbox),
    "data": _optional(str),
    "output_dir": str,
}

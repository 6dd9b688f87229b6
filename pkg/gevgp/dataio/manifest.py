"""JSON run manifests written next to every CLI output."""

import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numdifftools
import numpy as np
import pandas as pd
import scipy

from .. import __version__
from ..core.errors import DataError
from ..core.settings import RunConfig
from .csvio import PathLike, atomic_write

logger = logging.getLogger(__name__)

def manifest_name(command: str) -> str:
    """Per-command manifest file name, so successive commands in one directory keep their records."""
    return f"manifest-{command}.json"


def library_versions() -> Dict[str, str]:
    return {
        "gevgp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "numdifftools": numdifftools.__version__,
        "python": platform.python_version(),
    }


def write_manifest(
    path: PathLike,
    command: str,
    config: RunConfig,
    wall_seconds: float,
    outputs: Optional[List[str]] = None,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> Path:
    """Record what produced a set of outputs.

    Args:
        path: Manifest file
        command: Subcommand name
        config: Effective configuration (echoed in full)
        wall_seconds: Wall time of the command
        outputs: Files written by the command
        diagnostics: Convergence diagnostics, when a fit was involved

    Returns:
        Path of the manifest
    """
    manifest = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": config.seed,
        "config": config.to_dict(),
        "versions": library_versions(),
        "wall_seconds": wall_seconds,
        "outputs": list(outputs or []),
        "diagnostics": diagnostics,
    }
    with atomic_write(path) as f:
        json.dump(manifest, f, indent=2, default=float)
    logger.info(f"wrote manifest to {path}")
    return Path(path)


def read_manifest(path: PathLike) -> Dict[str, Any]:
    """Load a manifest and re-validate its config echo."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    manifest["config"] = RunConfig.from_dict(manifest.get("config", {}))
    return manifest

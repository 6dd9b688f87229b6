"""Persisted fits.

A fit is saved as one ``.npz`` archive: the numeric blocks (``v_theta``,
``u_hat``, ``v_u``, ``j_u``) and the fitted dataset (``coords``,
``y_flat``, ``counts``) as arrays, plus a ``meta`` entry holding a JSON
document with the model name, theta names and values, kernel settings
and diagnostics.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ..core.errors import DataError
from ..core.gev import GUMBEL, LogShape
from ..core.kernel import KernelConfig
from ..core.laplace import FitDiagnostics, FitResult
from ..core.model import Hypers, LatentField, ModelSpec, SiteDataset, Transform
from .csvio import PathLike, atomic_write

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _kernel_meta(cfg: Optional[KernelConfig]) -> Optional[Dict[str, Any]]:
    if cfg is None:
        return None
    return {"jitter": cfg.jitter, "form": cfg.form}


def _meta(fit: FitResult) -> Dict[str, Any]:
    theta = fit.theta_hat
    return {
        "format_version": FORMAT_VERSION,
        "model": fit.spec.name,
        "theta_names": fit.theta_names,
        "theta": fit.theta_vec.tolist(),
        "kernel_a": _kernel_meta(theta.kernel_a),
        "kernel_b": _kernel_meta(theta.kernel_b),
        "laplace_logml": fit.laplace_logml_at_mode,
        "diagnostics": fit.diagnostics.to_dict(),
        "transform": None if fit.data is None else fit.data.transform.value,
    }


def save_fit(fit: FitResult, path: PathLike) -> Path:
    """Write ``fit`` (and its dataset, when attached) to ``path``."""
    arrays = {
        "v_theta": fit.v_theta,
        "u_hat": fit.u_hat.stack(),
        "v_u": fit.v_u,
        "j_u": fit.j_u,
        "meta": np.array(json.dumps(_meta(fit), default=float)),
    }
    if fit.data is not None:
        arrays.update(coords=fit.data.coords, y_flat=fit.data.y_flat, counts=fit.data.counts)
    with atomic_write(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"saved {fit.spec.name} fit ({fit.n_sites} sites) to {path}")
    return Path(path)


def _theta_template(spec: ModelSpec, meta: Dict[str, Any]) -> Hypers:
    shape = LogShape(0.0) if spec.estimates_shape else GUMBEL
    kernel_a = KernelConfig(**meta["kernel_a"])
    if spec.b_random:
        return Hypers(shape=shape, kernel_a=kernel_a, kernel_b=KernelConfig(**meta["kernel_b"]))
    return Hypers(shape=shape, kernel_a=kernel_a, b_fixed=0.0)


def load_fit(path: PathLike) -> FitResult:
    """Read a fit written by ``save_fit``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"fit file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
        meta = json.loads(str(arrays["meta"]))
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read fit file {path}: {e}") from e
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported fit file version: {meta.get('format_version')}")

    spec = ModelSpec.named(meta["model"])
    theta = _theta_template(spec, meta).with_vector(meta["theta"])
    if theta.names() != meta["theta_names"]:
        raise DataError(f"theta names in {path} do not match model {spec.name}")

    data = None
    if "coords" in arrays:
        counts = arrays["counts"].astype(int)
        obs = np.split(arrays["y_flat"], np.cumsum(counts)[:-1])
        data = SiteDataset(coords=arrays["coords"], obs=tuple(obs), transform=Transform(meta["transform"]))

    n_sites = arrays["coords"].shape[0] if data is not None else None
    u = arrays["u_hat"]
    if n_sites is None:
        n_sites = u.size // 2 if spec.b_random else u.size
    fit = FitResult(
        spec=spec,
        theta_hat=theta,
        v_theta=arrays["v_theta"],
        u_hat=LatentField.from_stacked(u, n_sites, spec.b_random),
        v_u=arrays["v_u"],
        j_u=arrays["j_u"],
        laplace_logml_at_mode=float(meta["laplace_logml"]),
        diagnostics=FitDiagnostics.from_dict(meta["diagnostics"]),
        data=data,
    )
    logger.info(f"loaded {spec.name} fit ({fit.n_sites} sites) from {path}")
    return fit

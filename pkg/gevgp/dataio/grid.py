"""Gridding of point records into per-cell maxima."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import DomainError
from ..core.model import SiteDataset

logger = logging.getLogger(__name__)

BBox = Tuple[float, float, float, float]


@dataclass(frozen=True)
class GridSpec:
    """Square cells of ``cell_deg`` degrees inside ``bbox``.

    ``bbox = (lon_min, lon_max, lat_min, lat_max)``; when omitted it is the
    extent of the records. Cells are half-open ``[lo, lo + cell)`` except
    along the upper edge of the box, which is closed. Records outside the
    box are ignored.
    """
    cell_deg: float = 3.0
    min_records: int = 20
    bbox: Optional[BBox] = None

    def __post_init__(self):
        if not (self.cell_deg > 0 and math.isfinite(self.cell_deg)):
            raise DomainError(f"cell_deg must be positive, got {self.cell_deg}")
        if self.min_records < 1:
            raise DomainError(f"min_records must be >= 1, got {self.min_records}")
        if self.bbox is not None:
            if len(self.bbox) != 4:
                raise DomainError("bbox must be (lon_min, lon_max, lat_min, lat_max)")
            lon_min, lon_max, lat_min, lat_max = self.bbox
            if not (lon_min < lon_max and lat_min < lat_max):
                raise DomainError(f"bbox is not well ordered: {self.bbox}")
            object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass(frozen=True)
class GridResult:
    """Kept cells as sites (center coordinates, single maximum each) plus record counts."""
    dataset: SiteDataset
    counts: np.ndarray
    cells: np.ndarray


# Relative tolerance for snapping a record onto a cell edge.
EDGE_RTOL = 1e-9


def _snap(ratio):
    nearest = np.round(ratio)
    return np.where(np.abs(ratio - nearest) <= EDGE_RTOL * np.maximum(1.0, np.abs(ratio)), nearest, ratio)


def _cell_index(values: np.ndarray, lo: float, hi: float, cell: float) -> np.ndarray:
    """Cell of each value; a value on an internal edge opens the next cell."""
    n_cells = max(1, int(math.ceil(float(_snap((hi - lo) / cell)))))
    idx = np.floor(_snap((values - lo) / cell)).astype(int)
    return np.minimum(idx, n_cells - 1)


def grid_maxima(records: Sequence[Tuple[float, float, float]], spec: GridSpec) -> GridResult:
    """Per-cell maxima of records, keeping cells with at least ``min_records`` records."""
    frame = pd.DataFrame(list(records), columns=["lon", "lat", "value"], dtype=float)
    if frame.empty:
        raise DomainError("no records to grid")
    if not np.all(np.isfinite(frame.to_numpy())):
        raise DomainError("records must be finite")

    if spec.bbox is None:
        bbox = (frame.lon.min(), frame.lon.max(), frame.lat.min(), frame.lat.max())
    else:
        bbox = spec.bbox
    lon_min, lon_max, lat_min, lat_max = bbox
    inside = frame.lon.between(lon_min, lon_max) & frame.lat.between(lat_min, lat_max)
    frame = frame[inside]
    dropped = int((~inside).sum())
    if dropped:
        logger.info(f"ignored {dropped} records outside the bounding box")

    frame = frame.assign(
        ix=_cell_index(frame.lon.to_numpy(), lon_min, lon_max, spec.cell_deg),
        iy=_cell_index(frame.lat.to_numpy(), lat_min, lat_max, spec.cell_deg),
    )
    cells = frame.groupby(["ix", "iy"], sort=True)["value"].agg(["max", "size"]).reset_index()
    kept = cells[cells["size"] >= spec.min_records]
    logger.info(f"{len(kept)} of {len(cells)} cells have at least {spec.min_records} records")
    if kept.empty:
        logger.warning("gridding kept no cells")

    centers = np.column_stack([
        lon_min + (kept["ix"].to_numpy() + 0.5) * spec.cell_deg,
        lat_min + (kept["iy"].to_numpy() + 0.5) * spec.cell_deg,
    ]) if not kept.empty else np.zeros((0, 2))
    dataset = SiteDataset(coords=centers, obs=tuple(np.array([v]) for v in kept["max"].to_numpy()))
    return GridResult(
        dataset=dataset,
        counts=kept["size"].to_numpy(dtype=int),
        cells=kept[["ix", "iy"]].to_numpy(dtype=int),
    )

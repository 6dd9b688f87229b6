"""CSV input and output.

Two input layouts are accepted:

- point records, header ``lon,lat,value``: one observation per row; rows
  with identical coordinates belong to the same site;
- ragged sites, header ``lon,lat,values``: one site per row with its
  observations separated by ``;``.

Floats are written with 17 significant digits so that values survive a
write/read cycle unchanged. Every file is written to a temporary sibling
and renamed into place.
"""

import contextlib
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np
import pandas as pd

from ..core.errors import DataError
from ..core.model import SiteDataset, Transform

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
VALUE_SEPARATOR = ";"
PathLike = Union[str, Path]


@contextlib.contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator:
    """Open a temporary file next to ``path``; rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""})) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def write_table(path: PathLike, frame: pd.DataFrame) -> Path:
    """Write a table atomically with full float precision."""
    with atomic_write(path) as f:
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"wrote {len(frame)} rows to {path}")
    return Path(path)


def _read_frame(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError("empty dataset", line=1) from None
    except pd.errors.ParserError as e:
        raise DataError(f"malformed CSV: {e}") from e
    frame.columns = [c.strip().lower() for c in frame.columns]
    return frame


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{column} is not a number: {text!r}", line=line) from None
    if not np.isfinite(value):
        raise DataError(f"{column} is not finite: {text!r}", line=line)
    return value


def read_records(path: PathLike) -> List[Tuple[float, float, float]]:
    """Point records ``(lon, lat, value)`` from a ``lon,lat,value`` file."""
    frame = _read_frame(path)
    if list(frame.columns) != ["lon", "lat", "value"]:
        raise DataError(f"expected header lon,lat,value, got {','.join(frame.columns)}", line=1)
    records = []
    for index, row in enumerate(frame.itertuples(index=False)):
        line = index + 2
        records.append((
            _parse_float(row.lon, line, "lon"),
            _parse_float(row.lat, line, "lat"),
            _parse_float(row.value, line, "value"),
        ))
    return records


def read_coords(path: PathLike) -> np.ndarray:
    """Site coordinates from a file whose first two columns are ``lon,lat``."""
    frame = _read_frame(path)
    if list(frame.columns[:2]) != ["lon", "lat"]:
        raise DataError(f"expected lon,lat columns, got {','.join(frame.columns)}", line=1)
    rows = [
        (_parse_float(row.lon, index + 2, "lon"), _parse_float(row.lat, index + 2, "lat"))
        for index, row in enumerate(frame.itertuples(index=False))
    ]
    if not rows:
        raise DataError("no coordinates in file")
    return np.asarray(rows, dtype=float)


def ingest_csv(path: PathLike, transform: Transform = Transform.NONE) -> SiteDataset:
    """Parse a point-record or ragged CSV into a SiteDataset.

    Errors name the offending line (the header is line 1).
    """
    frame = _read_frame(path)
    columns = list(frame.columns)
    if columns == ["lon", "lat", "value"]:
        records = read_records(path)
        sites: Dict[Tuple[float, float], List[float]] = {}
        for lon, lat, value in records:
            sites.setdefault((lon, lat), []).append(value)
        coords = list(sites)
        obs = [sites[c] for c in coords]
    elif columns == ["lon", "lat", "values"]:
        coords, obs = [], []
        for index, row in enumerate(frame.itertuples(index=False)):
            line = index + 2
            coords.append((_parse_float(row.lon, line, "lon"), _parse_float(row.lat, line, "lat")))
            parts = [p.strip() for p in str(row.values).split(VALUE_SEPARATOR)]
            if not parts or any(p == "" for p in parts):
                raise DataError("empty observation in values", line=line)
            obs.append([_parse_float(p, line, "values") for p in parts])
    else:
        raise DataError(f"expected header lon,lat,value or lon,lat,values, got {','.join(columns)}", line=1)

    if not coords:
        raise DataError("empty dataset")
    if transform == Transform.LOG:
        for site, values in enumerate(obs):
            if min(values) <= 0:
                raise DataError(f"log transform needs positive observations (site {site})")
    data = SiteDataset.from_raw(np.asarray(coords, float), obs, transform)
    logger.info(f"read {data.n_obs} observations at {data.n_sites} sites from {path}")
    return data


def export_csv(data: SiteDataset, path: PathLike) -> Path:
    """Write ``data`` in the ragged layout on the original scale."""
    observed = data.original_obs()
    frame = pd.DataFrame({
        "lon": [format_float(c[0]) for c in data.coords],
        "lat": [format_float(c[1]) for c in data.coords],
        "values": [VALUE_SEPARATOR.join(format_float(v) for v in obs) for obs in observed],
    })
    return write_table(path, frame)


def read_truth(path: PathLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinates and true (a, b) from a ``lon,lat,a,b`` truth file."""
    frame = _read_frame(path)
    if list(frame.columns) != ["lon", "lat", "a", "b"]:
        raise DataError(f"expected header lon,lat,a,b, got {','.join(frame.columns)}", line=1)
    values = np.array([
        [_parse_float(getattr(row, col), index + 2, col) for col in ("lon", "lat", "a", "b")]
        for index, row in enumerate(frame.itertuples(index=False))
    ])
    if values.size == 0:
        raise DataError("empty truth file")
    return values[:, :2], values[:, 2], values[:, 3]

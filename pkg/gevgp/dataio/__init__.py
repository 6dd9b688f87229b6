"""Data input/output: CSV files, gridding, persisted fits and run manifests."""

from .csvio import export_csv, ingest_csv, read_records, read_truth, write_table
from .grid import GridResult, GridSpec, grid_maxima
from .manifest import manifest_name, read_manifest, write_manifest
from .store import load_fit, save_fit

__all__ = [
    "GridResult",
    "GridSpec",
    "export_csv",
    "grid_maxima",
    "ingest_csv",
    "load_fit",
    "manifest_name",
    "read_manifest",
    "read_records",
    "read_truth",
    "save_fit",
    "write_manifest",
    "write_table",
]

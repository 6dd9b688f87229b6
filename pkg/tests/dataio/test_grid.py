"""Test suite for dataio.grid module."""

import logging
import math

import numpy as np
import pytest

from gevgp.core.errors import DomainError
from gevgp.dataio.grid import GridSpec, grid_maxima


def brute_force(records, bbox, cell, min_records):
    """Per-cell maxima by looping over every record."""
    lon_min, lon_max, lat_min, lat_max = bbox
    nx = math.ceil((lon_max - lon_min) / cell)
    ny = math.ceil((lat_max - lat_min) / cell)
    cells = {}
    for lon, lat, value in records:
        if not (lon_min <= lon <= lon_max and lat_min <= lat <= lat_max):
            continue
        ix = min(int(math.floor((lon - lon_min) / cell)), nx - 1)
        iy = min(int(math.floor((lat - lat_min) / cell)), ny - 1)
        best, count = cells.get((ix, iy), (-math.inf, 0))
        cells[(ix, iy)] = (max(best, value), count + 1)
    return {
        key: (lon_min + (key[0] + 0.5) * cell, lat_min + (key[1] + 0.5) * cell, best, count)
        for key, (best, count) in sorted(cells.items())
        if count >= min_records
    }


class TestGridMaxima:
    """Test cases for grid_maxima."""

    def test_single_cell(self):
        records = [(1.0 + 0.01 * k, 1.0, 50.0 + 0.1 * k) for k in range(25)]
        spec = GridSpec(cell_deg=3.0, min_records=20, bbox=(0.0, 3.0, 0.0, 3.0))

        result = grid_maxima(records, spec)

        assert result.dataset.n_sites == 1
        assert result.dataset.obs[0][0] == pytest.approx(52.4)
        np.testing.assert_array_equal(result.counts, [25])
        np.testing.assert_allclose(result.dataset.coords, [[1.5, 1.5]])

    def test_sparse_cell_dropped(self, caplog):
        records = [(1.0, 1.0, float(k)) for k in range(19)]
        spec = GridSpec(cell_deg=3.0, min_records=20, bbox=(0.0, 3.0, 0.0, 3.0))

        with caplog.at_level(logging.WARNING, logger="gevgp.dataio.grid"):
            result = grid_maxima(records, spec)

        assert result.dataset.n_sites == 0
        assert result.counts.size == 0
        assert "kept no cells" in caplog.text

    def test_boundaries(self):
        """Test that cells are half-open except along the upper edge."""
        records = [(3.0, 0.5, 1.0), (30.0, 0.5, 2.0), (2.999, 0.5, 3.0), (30.5, 0.5, 9.0)]
        spec = GridSpec(cell_deg=3.0, min_records=1, bbox=(0.0, 30.0, 0.0, 21.0))

        result = grid_maxima(records, spec)

        np.testing.assert_array_equal(result.cells, [[0, 0], [1, 0], [9, 0]])
        np.testing.assert_array_equal(result.dataset.y_flat, [3.0, 1.0, 2.0])

    def test_non_dyadic_cell_edges(self):
        """Test that records on an edge of a 0.3-degree cell open the upper cell."""
        records = [(0.6, 0.1, 1.0), (0.3, 0.1, 2.0), (0.9, 0.1, 3.0), (0.59, 0.1, 4.0)]
        spec = GridSpec(cell_deg=0.3, min_records=1, bbox=(0.0, 0.9, 0.0, 0.9))

        result = grid_maxima(records, spec)

        np.testing.assert_array_equal(result.cells, [[1, 0], [2, 0]])
        np.testing.assert_array_equal(result.dataset.y_flat, [4.0, 3.0])
        np.testing.assert_array_equal(result.counts, [2, 2])
        np.testing.assert_allclose(result.dataset.coords, [[0.45, 0.15], [0.75, 0.15]])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(77)
        n = 10_000
        records = list(zip(
            rng.uniform(-2.0, 32.0, n).round(1),
            rng.uniform(-1.0, 22.0, n).round(1),
            rng.gumbel(10.0, 2.0, n),
        ))
        records += [(30.0, 21.0, 99.0), (0.0, 0.0, -5.0), (3.0, 3.0, 1.0)]
        bbox = (0.0, 30.0, 0.0, 21.0)

        result = grid_maxima(records, GridSpec(cell_deg=3.0, min_records=20, bbox=bbox))
        expected = brute_force(records, bbox, 3.0, 20)

        assert [tuple(c) for c in result.cells] == list(expected)
        values = np.array(list(expected.values()))
        np.testing.assert_allclose(result.dataset.coords, values[:, :2])
        np.testing.assert_array_equal(result.dataset.y_flat, values[:, 2])
        np.testing.assert_array_equal(result.counts, values[:, 3].astype(int))

    def test_invariant_to_record_order(self):
        rng = np.random.default_rng(5)
        records = [tuple(r) for r in np.column_stack([rng.uniform(0, 9, 500), rng.uniform(0, 9, 500),
                                                      rng.normal(size=500)])]
        spec = GridSpec(cell_deg=3.0, min_records=5)

        first = grid_maxima(records, spec)
        second = grid_maxima(records[::-1], spec)

        np.testing.assert_array_equal(first.cells, second.cells)
        np.testing.assert_array_equal(first.dataset.y_flat, second.dataset.y_flat)

    def test_no_records(self):
        with pytest.raises(DomainError):
            grid_maxima([], GridSpec())

    def test_non_finite_record(self):
        with pytest.raises(DomainError):
            grid_maxima([(0.0, 0.0, math.nan)], GridSpec(min_records=1))


class TestGridSpec:
    """Test cases for GridSpec validation."""

    @pytest.mark.parametrize("kwargs", [
        {"cell_deg": 0.0},
        {"cell_deg": math.inf},
        {"min_records": 0},
        {"bbox": (0.0, 1.0, 0.0)},
        {"bbox": (1.0, 0.0, 0.0, 1.0)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            GridSpec(**kwargs)

    def test_bbox_coerced_to_floats(self):
        assert GridSpec(bbox=[0, 30, 0, 21]).bbox == (0.0, 30.0, 0.0, 21.0)

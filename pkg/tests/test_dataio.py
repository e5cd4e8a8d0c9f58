import numpy as np
import pytest

from ppcov.dataio import (
    read_ascii_grid,
    read_pattern_csv,
    read_window_mask,
    write_ascii_grid,
    write_pattern_csv,
    write_power_csv,
)
from ppcov.errors import InputDataError
from ppcov.geometry import CovariateGrid, GridGeometry, PointPattern
from ppcov.simulate import PowerStudyResult


class TestAsciiGrid:
    def test_orientation_top_row_first(self, tmp_path):
        path = tmp_path / "g.asc"
        path.write_text(
            "ncols 2\nnrows 2\nxllcorner 0.0\nyllcorner 0.0\ncellsize 1.0\n"
            "NODATA_value -9999\n"
            "1 2\n3 4\n"
        )
        grid = read_ascii_grid(path)
        # File rows run north to south; internally row 0 is the south edge.
        np.testing.assert_array_equal(grid.values, [[3.0, 4.0], [1.0, 2.0]])
        assert grid.geometry.cellsize == 1.0

    def test_roundtrip(self, tmp_path, rng):
        geometry = GridGeometry(nrows=5, ncols=7, x_origin=-2.5, y_origin=3.0, cellsize=0.125)
        values = rng.normal(size=(5, 7))
        values[2, 3] = np.nan
        grid = CovariateGrid(geometry, values)
        path = tmp_path / "grid.asc"
        write_ascii_grid(grid, path)
        back = read_ascii_grid(path)
        assert back.geometry == geometry
        np.testing.assert_array_equal(back.values, grid.values)

    def test_nodata_cells_become_nan(self, tmp_path):
        path = tmp_path / "g.asc"
        path.write_text(
            "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
            "NODATA_value -1\n-1 5\n"
        )
        grid = read_ascii_grid(path)
        assert np.isnan(grid.values[0, 0]) and grid.values[0, 1] == 5.0

    def test_missing_header_key(self, tmp_path):
        path = tmp_path / "g.asc"
        path.write_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\n1 2\n")
        with pytest.raises(InputDataError, match="cellsize"):
            read_ascii_grid(path)

    def test_bad_token_reports_line(self, tmp_path):
        path = tmp_path / "g.asc"
        path.write_text(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\nfoo 4\n"
        )
        with pytest.raises(InputDataError, match="line 7"):
            read_ascii_grid(path)

    def test_cell_count_mismatch(self, tmp_path):
        path = tmp_path / "g.asc"
        path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n")
        with pytest.raises(InputDataError, match="expected 4"):
            read_ascii_grid(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputDataError, match="cannot read"):
            read_ascii_grid(tmp_path / "absent.asc")


class TestWindowMask:
    def test_mask_alignment_enforced(self, tmp_path):
        cov = tmp_path / "z.asc"
        cov.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n")
        mask = tmp_path / "m.asc"
        mask.write_text("ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 1 1\n0 0 0\n")
        grid = read_ascii_grid(cov)
        with pytest.raises(InputDataError, match="aligned"):
            read_window_mask(mask, grid)

    def test_mask_reads_true_cells(self, tmp_path):
        cov = tmp_path / "z.asc"
        cov.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n")
        mask = tmp_path / "m.asc"
        mask.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 0\n1 1\n")
        window = read_window_mask(mask, read_ascii_grid(cov))
        assert window.area == pytest.approx(3.0)


class TestPatternCsv:
    def test_roundtrip_is_exact(self, tmp_path, rng):
        pattern = PointPattern(rng.random(50) * 330.0, rng.random(50) * 394.0)
        path = tmp_path / "p.csv"
        write_pattern_csv(pattern, path)
        back = read_pattern_csv(path)
        np.testing.assert_array_equal(back.x, pattern.x)
        np.testing.assert_array_equal(back.y, pattern.y)

    def test_header_required(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(InputDataError, match="line 1"):
            read_pattern_csv(path)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("x,y\n0.1,0.2\n0.3\n")
        with pytest.raises(InputDataError, match="line 3"):
            read_pattern_csv(path)

    def test_empty_pattern_roundtrip(self, tmp_path):
        path = tmp_path / "p.csv"
        write_pattern_csv(PointPattern.empty(), path)
        assert read_pattern_csv(path).n == 0


class TestPowerCsv:
    def test_layout_and_config_comments(self, tmp_path):
        result = PowerStudyResult(
            m_values=[50.0, 100.0],
            d_values=[0.2, None],
            rejections=np.array([[0.9, 0.05], [1.0, np.nan]]),
            failures=np.zeros((2, 2), dtype=int),
            replicates=10,
            n_boot=20,
            alpha=0.05,
            seed=7,
        )
        path = tmp_path / "table.csv"
        write_power_csv(result, {"study": {"seed": 7, "alpha": 0.05}}, path)
        lines = path.read_text().splitlines()
        comments = [line for line in lines if line.startswith("#")]
        assert any("study.seed = 7" in c for c in comments)
        header = next(line for line in lines if not line.startswith("#"))
        assert header == "m,0.2,inf"
        rows = [line for line in lines if not line.startswith("#")][1:]
        assert rows[0].split(",")[0] == "50.0"
        assert rows[1].split(",")[2] == "nan"

"""Results-table I/O, merging, markdown pivots, and montage grids."""

import numpy as np
import pytest

from wipunet.engine import ShapeError, Tensor
from wipunet.metrics import MetricRow
from wipunet.report import (
    RESULTS_HEADER,
    RESULTS_SCHEMA,
    build_grid,
    merge_results,
    pivot_results,
    read_results,
    results_markdown,
    write_results,
)


def row(model, sigma, psnr, ssim, n=8):
    return MetricRow(model=model, sigma=sigma, psnr_db=psnr, ssim=ssim, n_images=n)


class TestResultsCsv:
    def test_roundtrip(self, tmp_path):
        rows = [row("dncnn", 25.0, 27.123456789, 0.81234, 512),
                row("wipunet", 50.0, 24.5, 0.7, 512)]
        path = tmp_path / "results.csv"
        write_results(rows, path)
        back = read_results(path)
        assert len(back) == 2
        for a, b in zip(rows, back):
            assert a.model == b.model
            assert a.sigma == b.sigma
            assert a.psnr_db == b.psnr_db  # repr() roundtrips floats exactly
            assert a.ssim == b.ssim
            assert a.n_images == b.n_images

    def test_schema_line_first(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results([row("m", 15.0, 20.0, 0.5)], path)
        lines = path.read_text().splitlines()
        assert lines[0] == f"# schema: {RESULTS_SCHEMA}"
        assert lines[1] == RESULTS_HEADER

    def test_unknown_schema_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# schema: wipunet-results-v9\n" + RESULTS_HEADER + "\n")
        with pytest.raises(ValueError, match="schema"):
            read_results(path)

    def test_missing_schema_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(RESULTS_HEADER + "\nm,15.0,20.0,0.5,8\n")
        with pytest.raises(ValueError, match="schema"):
            read_results(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(f"# schema: {RESULTS_SCHEMA}\nmodel,sigma,psnr\n")
        with pytest.raises(ValueError, match="header"):
            read_results(path)

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(f"# schema: {RESULTS_SCHEMA}\n{RESULTS_HEADER}\nm,15.0,20.0\n")
        with pytest.raises(ValueError, match="malformed"):
            read_results(path)

    def test_write_is_deterministic(self, tmp_path):
        rows = [row("m", 25.0, 1.0 / 3.0, 2.0 / 3.0)]
        write_results(rows, tmp_path / "a.csv")
        write_results(rows, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestMerge:
    def test_concatenates(self):
        merged = merge_results([row("a", 15.0, 1.0, 0.1)], [row("b", 15.0, 2.0, 0.2)])
        assert [r.model for r in merged] == ["a", "b"]

    def test_duplicate_model_sigma_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            merge_results([row("a", 15.0, 1.0, 0.1)], [row("a", 15.0, 2.0, 0.2)])

    def test_same_model_different_sigma_ok(self):
        merged = merge_results([row("a", 15.0, 1.0, 0.1), row("a", 25.0, 2.0, 0.2)])
        assert len(merged) == 2

    def test_duplicate_within_one_list_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            merge_results([row("a", 15.0, 1.0, 0.1), row("a", 15.0, 1.0, 0.1)])


class TestPivot:
    def test_orders_models_first_seen_sigmas_ascending(self):
        rows = [row("b", 50.0, 1.0, 0.1), row("a", 15.0, 2.0, 0.2),
                row("b", 15.0, 3.0, 0.3), row("a", 50.0, 4.0, 0.4)]
        models, sigmas, cells = pivot_results(rows)
        assert models == ["b", "a"]
        assert sigmas == [15.0, 50.0]
        assert cells[("b", 50.0)] == (1.0, 0.1)
        assert cells[("a", 15.0)] == (2.0, 0.2)


class TestMarkdown:
    # hand-checked 2x2 fixture: per column, psnr and ssim maxima live on
    # different models so both bolding paths are exercised
    ROWS = [
        row("dncnn", 15.0, 30.10, 0.900),
        row("dncnn", 50.0, 24.00, 0.650),
        row("wipunet", 15.0, 30.50, 0.880),
        row("wipunet", 50.0, 23.50, 0.700),
    ]

    def test_layout(self):
        md = results_markdown(self.ROWS)
        lines = md.splitlines()
        assert lines[0] == "| model | σ=15 PSNR/SSIM | σ=50 PSNR/SSIM |"
        assert lines[1] == "| --- | --- | --- |"
        assert lines[2] == "| dncnn | 30.10/**0.9000** | **24.00**/0.6500 |"
        assert lines[3] == "| wipunet | **30.50**/0.8800 | 23.50/**0.7000** |"

    def test_bold_exactly_once_per_column_metric(self):
        md = results_markdown(self.ROWS)
        # 2 columns x 2 metrics -> 4 bold spans -> 8 "**" markers
        assert md.count("**") == 8

    def test_tie_bolds_single_cell(self):
        rows = [row("a", 15.0, 20.0, 0.5), row("b", 15.0, 20.0, 0.5)]
        md = results_markdown(rows)
        assert md.count("**") == 4  # one psnr + one ssim bold despite the tie

    def test_missing_cell_renders_dash(self):
        rows = [row("a", 15.0, 20.0, 0.5), row("b", 50.0, 10.0, 0.2)]
        md = results_markdown(rows)
        assert "—" in md


class TestBuildGrid:
    def images(self, n, h=8, w=8, value=0.5):
        return [Tensor(np.full((1, 3, h, w), value, dtype=np.float32)) for _ in range(n)]

    def test_shape_with_separators(self):
        grid = build_grid([self.images(3), self.images(3)], sep=2)
        # 2 rows x 3 cols of 8x8 with 2px gaps
        assert grid.shape == (1, 3, 2 * 8 + 2, 3 * 8 + 2 * 2)

    def test_separators_are_white(self):
        grid = build_grid([self.images(2, value=0.0), self.images(2, value=0.0)], sep=2)
        assert np.all(grid.data[0, :, 8:10, :] == 1.0)   # horizontal gap
        assert np.all(grid.data[0, :, :, 8:10] == 1.0)   # vertical gap
        assert np.all(grid.data[0, :, :8, :8] == 0.0)    # image content kept

    def test_single_image(self):
        grid = build_grid([self.images(1)])
        assert grid.shape == (1, 3, 8, 8)

    def test_values_clipped(self):
        img = Tensor(np.full((1, 3, 4, 4), 1.7, dtype=np.float32))
        grid = build_grid([[img]])
        assert grid.data.max() <= 1.0

    def test_ragged_rows_rejected(self):
        with pytest.raises(ValueError, match="equal"):
            build_grid([self.images(2), self.images(3)])

    def test_mismatched_sizes_rejected(self):
        with pytest.raises(ShapeError):
            build_grid([[self.images(1)[0], self.images(1, h=16, w=16)[0]]])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_grid([])

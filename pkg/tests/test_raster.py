"""Shared rasterization helpers and PGM round trips."""

import numpy as np
import pytest

from genscl import raster


class TestRasterizePolylines:
    def test_empty_input(self):
        img = raster.rasterize_polylines([], 32)
        assert img.shape == (32, 32) and not img.any()

    def test_single_point(self):
        img = raster.rasterize_polylines([np.array([[0.0, 0.0]])], 32)
        assert img.sum() == 1.0

    def test_margin_respected(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
        size = 64
        img = raster.rasterize_polylines([square], size, margin=0.1)
        pad = int(round(0.1 * size))
        assert not img[:pad].any() and not img[-pad:].any()
        assert not img[:, :pad].any() and not img[:, -pad:].any()

    def test_y_axis_points_up(self):
        # A segment towards +y must land in smaller row indices.
        seg = np.array([[0.0, 0.0], [0.0, 1.0]])
        base = np.array([[0.0, 0.0], [1.0, 0.0]])
        img = raster.rasterize_polylines([seg, base], 32)
        rows, cols = np.nonzero(img)
        top_rows = rows[cols == cols.min()]
        assert top_rows.min() < rows.max()

    def test_values_binary(self):
        poly = np.array([[0, 0], [3, 1], [2, 4]], dtype=float)
        img = raster.rasterize_polylines([poly], 48)
        assert set(np.unique(img)) <= {0.0, 1.0}


class TestPgm:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = np.round(rng.random((17, 17)) * 255) / 255
        path = tmp_path / "img.pgm"
        raster.to_pgm(img, path)
        back = raster.from_pgm(path)
        assert back.shape == img.shape
        assert np.allclose(back, img, atol=0.5 / 255)

    def test_header_format(self, tmp_path):
        path = tmp_path / "img.pgm"
        raster.to_pgm(np.zeros((4, 6)), path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n6 4\n255\n")
        assert len(blob) == len(b"P5\n6 4\n255\n") + 24

    def test_rejects_non_p5(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0")
        with pytest.raises(ValueError):
            raster.from_pgm(path)

    def test_clamps_out_of_range(self, tmp_path):
        img = np.array([[-0.5, 1.5]])
        path = tmp_path / "img.pgm"
        raster.to_pgm(img, path)
        back = raster.from_pgm(path)
        assert back[0, 0] == 0.0 and back[0, 1] == 1.0

"""Shared stroke rasterization and PGM import/export.

Rasters are square float grids with values in [0, 1]; ink is 1, background 0.
Strokes are one pixel wide with no anti-aliasing, so identical geometry yields
byte-identical rasters.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["rasterize_polylines", "to_pgm", "from_pgm"]


def _draw_segment(grid: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    """8-connected 1-pixel segment via DDA on rounded pixel centers."""
    size = grid.shape[0]
    steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    ts = np.linspace(0.0, 1.0, steps + 1)
    xs = np.rint(x0 + (x1 - x0) * ts).astype(int)
    ys = np.rint(y0 + (y1 - y0) * ts).astype(int)
    keep = (xs >= 0) & (xs < size) & (ys >= 0) & (ys < size)
    grid[ys[keep], xs[keep]] = 1.0


def rasterize_polylines(
    polylines: Sequence[np.ndarray], size: int, margin: float = 0.1
) -> np.ndarray:
    """Scale and center polylines into a size x size grid and stroke them.

    The drawing is fit isotropically so its larger extent spans the canvas
    minus a margin of round(margin * size) pixels per side, then centered.
    The y axis points up in input coordinates and down in raster rows.
    An empty input produces an all-zero raster.
    """
    if size < 2:
        raise ValueError(f"raster size must be >= 2, got {size}")
    grid = np.zeros((size, size), dtype=float)
    pts = [np.asarray(p, dtype=float) for p in polylines if len(p) > 0]
    if not pts:
        return grid
    allpts = np.concatenate(pts, axis=0)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    extent = float(np.max(hi - lo))
    pad = int(round(margin * size))
    usable = size - 1 - 2 * pad
    if usable < 1:
        raise ValueError("margin leaves no drawable area")
    scale = usable / extent if extent > 0 else 1.0
    center = (lo + hi) / 2.0
    canvas_mid = (size - 1) / 2.0

    def to_pixel(p: np.ndarray) -> tuple[float, float]:
        x = canvas_mid + (p[0] - center[0]) * scale
        y = canvas_mid - (p[1] - center[1]) * scale
        return x, y

    for poly in pts:
        if len(poly) == 1:
            x, y = to_pixel(poly[0])
            xi, yi = int(round(x)), int(round(y))
            if 0 <= xi < size and 0 <= yi < size:
                grid[yi, xi] = 1.0
            continue
        pix = [to_pixel(p) for p in poly]
        for (x0, y0), (x1, y1) in zip(pix[:-1], pix[1:]):
            _draw_segment(grid, x0, y0, x1, y1)
    return grid


def to_pgm(raster: np.ndarray, path: str | Path) -> None:
    """Write a [0,1] raster as binary PGM (P5), maxval 255."""
    raster = np.asarray(raster, dtype=float)
    if raster.ndim != 2:
        raise ValueError("raster must be 2-D")
    data = np.rint(np.clip(raster, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def from_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) file back into a [0,1] float raster."""
    with open(path, "rb") as fh:
        blob = fh.read()
    # Header: magic, width, height, maxval, separated by whitespace/comments.
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(blob) and not blob[j : j + 1].isspace():
            j += 1
        tokens.append(blob[i:j])
        i = j
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM file: magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    i += 1  # single whitespace after maxval
    data = np.frombuffer(blob[i : i + w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(float) / float(maxval)

"""Generative-similarity contrastive learning toolkit."""

__version__ = "0.1.0"

from . import core, drawing, evaluation, gaussian, nets, quads, raster, training  # noqa: F401

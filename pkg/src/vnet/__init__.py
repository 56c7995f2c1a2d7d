"""Geometry-transferable neural surrogates for active-space two-body tensors."""

__version__ = "0.1.0"

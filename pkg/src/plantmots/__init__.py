"""Tracking-by-segmentation of same-looking plants with shape-feature re-identification."""

__version__ = "0.1.0"

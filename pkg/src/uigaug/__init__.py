"""Interaction-graph augmentation, diversity scoring and evaluation metrics."""

__version__ = "0.1.0"

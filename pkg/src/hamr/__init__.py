"""Hardness-aware meta-reweighting and resampling for imbalanced classification."""

__version__ = "0.1.0"

"""Lightweight complexity-augmented runtime predictors for compute kernels."""

__version__ = "0.1.0"

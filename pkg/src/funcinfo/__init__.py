"""Functional-information feature attribution for differentiable classifiers."""

__version__ = "0.1.0"

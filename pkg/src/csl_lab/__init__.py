"""Numerical laboratory for relativistic collapse models with tachyonic noise."""

__version__ = "0.1.0"

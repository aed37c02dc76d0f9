"""Numerical toolkit for spectral distances on the truncated deformed plane."""

__version__ = "0.1.0"

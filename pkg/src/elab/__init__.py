"""Numerical laboratory for the mean-field semiclassical limit to compressible Euler."""

__version__ = "0.1.0"

"""Numerical and combinatorial checks for equilateral-triangle configurations."""

__version__ = "0.1.0"

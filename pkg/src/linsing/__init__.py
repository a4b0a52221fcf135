"""Numerical toolkit for linearly singular differential equations A(x) x' = b(x)."""

__version__ = "0.1.0"

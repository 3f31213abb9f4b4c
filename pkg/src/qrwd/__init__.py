"""Numerical toolkit for a finite-order entire-function wandering-domain construction."""

__version__ = "0.1.0"

"""Desk-scale laboratory for exponential-sum Strichartz estimates on the parabola."""

__version__ = "0.1.0"

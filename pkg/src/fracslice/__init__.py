"""Slices and projections of self-similar and product Cantor measures."""

__version__ = "0.1.0"

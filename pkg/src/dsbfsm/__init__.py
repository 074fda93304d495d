"""Dominant-sets based band selection for hyperspectral imagery."""

__version__ = "0.1.0"

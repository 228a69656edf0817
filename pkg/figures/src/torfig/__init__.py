"""Plotting companion for torwalk outputs."""

__version__ = "0.1.0"

"""Finite-difference building thermal simulator and control environment."""

__version__ = "0.1.0"

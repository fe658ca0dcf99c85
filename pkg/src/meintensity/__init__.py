"""Weakly supervised micro-expression intensity estimation."""

__version__ = "0.1.0"

"""Lyapunov-condition certificates for functional inequalities of exp(-V)."""

__version__ = "0.1.0"

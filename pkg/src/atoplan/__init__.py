"""Stochastic assemble-to-order production planning."""

__version__ = "0.1.0"

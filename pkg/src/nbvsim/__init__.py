"""Simulation library for prediction-guided next-best-view surface scanning."""

__version__ = "0.1.0"

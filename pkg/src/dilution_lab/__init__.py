"""Noisy Trotter-circuit laboratory."""

__version__ = "0.1.0"

"""Confounding measures from multi-context data with mechanism shifts."""

__version__ = "0.1.0"

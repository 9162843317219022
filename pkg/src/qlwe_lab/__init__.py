"""Desk-scale simulator for quantum LWE state algorithms and reductions."""

__version__ = "0.1.0"

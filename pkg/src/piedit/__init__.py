"""Parallel iterative edit (PIE) models for local sequence transduction."""

__version__ = "0.1.0"

"""
polystab - Stability of measured toric polytopes.

This package decides K-stability of toric polytopes with boundary measures
through the optimal destabilising convex function, decomposes unstable
polytopes along its linearity regions, and runs the Calabi flow on
weighted intervals.
"""

__version__ = "0.2.0"
__author__ = "polystab Team"

from .app import run_app

__all__ = ["run_app"]

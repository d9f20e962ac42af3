"""Finite-volume simulator for degenerate two-phase, two-component (water/hydrogen) flow."""

__version__ = "0.1.0"

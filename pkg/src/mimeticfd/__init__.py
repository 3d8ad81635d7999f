"""Symmetry-preserving finite differences on periodic curvilinear staggered grids."""

__version__ = "0.1.0"

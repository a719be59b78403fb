"""Evolve-filter-relax regularization toolkit on staggered grids."""

__version__ = "0.1.0"

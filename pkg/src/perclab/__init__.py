"""Supercritical bond percolation lab: chemical distances, edge surgery,
variance experiments and exact hypercube concentration checks."""

__version__ = "0.1.0"

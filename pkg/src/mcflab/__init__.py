"""Numerical laboratory for mean curvature flow and its singularity analysis."""

__version__ = "0.1.0"

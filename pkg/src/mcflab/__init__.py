"""Numerical laboratory for rotationally symmetric mean curvature flow near cylinders."""

__version__ = "0.1.0"

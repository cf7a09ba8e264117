"""Spectral optimization of weighted graphs built from point configurations
on spheres, flat tori and two-dimensional lattices."""

__version__ = "0.1.0"

from .geometry import EdgeIndex, FlatTorus, PointConfig, Sphere
from .graphkernel import WeightFunction, assemble
from .spectral import InvariantId, invariant, sym_eigen

__all__ = ["EdgeIndex", "FlatTorus", "PointConfig", "Sphere", "WeightFunction", "assemble",
           "InvariantId", "invariant", "sym_eigen"]

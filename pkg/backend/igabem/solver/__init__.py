"""Quadrature, Galerkin assembly and problem data."""

from igabem.solver.bem import Density, GalerkinSystem, QuadConfig, assemble, solve
from igabem.solver.problems import build_problem

__all__ = [
    "Density",
    "GalerkinSystem",
    "QuadConfig",
    "assemble",
    "build_problem",
    "solve",
]

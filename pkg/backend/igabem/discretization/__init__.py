"""Parametrized curves, spline spaces and knot meshes."""

from igabem.discretization.geometry import ParamCurve, builtin_geometry
from igabem.discretization.mesh import KnotMesh, initial_mesh, refine
from igabem.discretization.splines import KnotVector, NurbsSpace

__all__ = [
    "KnotMesh",
    "KnotVector",
    "NurbsSpace",
    "ParamCurve",
    "builtin_geometry",
    "initial_mesh",
    "refine",
]

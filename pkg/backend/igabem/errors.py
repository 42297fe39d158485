"""Exception hierarchy.

Messages start with a snake_case code followed by detail, e.g.
``parameter_out_of_range: t=3.5 outside [0, 3.14159]``.
"""
from __future__ import annotations


class IgabemError(Exception):
    pass


class DomainError(IgabemError, ValueError):
    """A parameter, index or argument lies outside its admissible domain."""


class ConfigurationError(IgabemError, ValueError):
    """Unknown names or inconsistent run configuration."""


class RefinementError(IgabemError):
    """Knot multiplicity overflow or meshes of different ancestry."""


class UnsupportedOperationError(IgabemError):
    pass


class NumericalError(IgabemError, RuntimeError):
    """Root of failures detected while computing."""


class AssemblyError(NumericalError):
    pass


class FactorizationError(NumericalError):
    """The Galerkin matrix is not symmetric positive definite."""


class InternalError(NumericalError):
    pass


class ResolutionError(RefinementError):
    """Bisection would put two nodes closer than double precision resolves."""

"""
Exception Hierarchy

All failures raised by the TraceFEM pipeline derive from TraceFEMError and
from the closest builtin exception, so callers that only know about
ValueError / RuntimeError / LookupError keep working.
"""


class TraceFEMError(Exception):
    """Base class for every pipeline failure."""


class ConfigurationError(TraceFEMError, ValueError):
    """Invalid or inconsistent configuration / unsupported degree."""


class ResourceLimitError(TraceFEMError, ValueError):
    """Requested problem size exceeds a resource guard."""


class DomainError(TraceFEMError, ValueError):
    """Point outside the domain of a geometric or manufactured field."""


class GeometryError(TraceFEMError, RuntimeError):
    """Degenerate discrete geometry (Jacobian, gradient, tube violation)."""


class RootFindError(TraceFEMError, RuntimeError):
    """
    Root finding for the deformation distance failed.

    Attributes:
        points (np.ndarray): Points where the bracket had no sign change
        bracket_values (np.ndarray): Residuals at both bracket ends
        element (int or None): Tetrahedron id, filled in by the caller
    """

    def __init__(self, message, points=None, bracket_values=None,
                 element=None):
        super().__init__(message)
        self.points = points
        self.bracket_values = bracket_values
        self.element = element


class PointLocationError(TraceFEMError, LookupError):
    """Point is not contained in the given (mapped) element."""


class AssemblyError(TraceFEMError, RuntimeError):
    """Assembled operator is unusable (e.g. zero diagonal entry)."""


class SolverError(TraceFEMError, RuntimeError):
    """Krylov solver breakdown (e.g. negative curvature in CG)."""


class NonConvergenceError(SolverError):
    """Iteration limit reached before the tolerance was met."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StageError(TraceFEMError, RuntimeError):
    """
    A pipeline stage of one refinement level failed.

    Attributes:
        stage (str): One of mesh, cut, deform, spaces, assemble, solve, errors
        level (int): Refinement level
        cause (Exception): The original failure
    """

    def __init__(self, stage, level, cause):
        super().__init__(f"Level {level} failed in stage '{stage}': {cause}")
        self.stage = stage
        self.level = level
        self.cause = cause

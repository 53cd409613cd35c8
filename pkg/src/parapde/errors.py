"""Exception types shared across the package."""


class ParapdeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ParapdeError):
    """A configuration value is invalid before any computation starts."""


class HypothesisViolation(ConfigurationError):
    """A run configuration violates one of the admissibility gates.

    The ``tag`` names the violated gate (e.g. ``"H1"`` or ``"S1"``) so
    callers and the CLI can report exactly which assumption failed.
    """

    def __init__(self, tag: str, message: str):
        super().__init__(f"{tag}: {message}")
        self.tag = tag


class LatticeMismatchError(ParapdeError):
    """Two objects live on incompatible grids or frequency lattices."""


class RegionExitError(ParapdeError):
    """A jet left the ellipticity region during an operator evaluation.

    Carries the flattened index of the first offending grid point so the
    caller can report where the coefficient field degenerated.
    """

    def __init__(self, message: str, point_index: int | None = None):
        super().__init__(message)
        self.point_index = point_index


class ResolventFailureError(ParapdeError):
    """An iterative resolvent solve did not reach the requested residual."""

    def __init__(self, message: str, z: complex | None = None, iterations: int | None = None):
        super().__init__(message)
        self.z = z
        self.iterations = iterations


class SolverFailureError(ParapdeError):
    """A time step could not be completed (Krylov breakdown or NaN state)."""

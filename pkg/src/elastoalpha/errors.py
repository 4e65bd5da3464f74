"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ElastoAlphaError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(ElastoAlphaError, ValueError):
    pass


class GeometryError(ElastoAlphaError):
    """Degenerate or inverted element geometry."""

    def __init__(self, message: str, element: int | None = None):
        super().__init__(message)
        self.element = element


class ConstitutiveError(ElastoAlphaError):
    """Inadmissible deformation (J <= 0) reached by the material model.

    ``elements`` lists the offending element ids when the error is raised
    during assembly; the marcher turns it into a step rejection.
    """

    def __init__(self, message: str, elements=None):
        super().__init__(message)
        self.elements = [] if elements is None else [int(e) for e in elements]


class ParameterizationError(ElastoAlphaError, ValueError):
    """Integrator parameters that make the scheme undefined."""


class ConfigError(ElastoAlphaError, ValueError):
    pass


class SolverError(ElastoAlphaError):
    """Linear solver failed to converge."""


class DivergenceError(ElastoAlphaError):
    """Time march could not continue (step underflow, retries exhausted).

    ``t`` is the time reached and ``reports`` the step history so far.
    """

    def __init__(self, message: str, t: float | None = None, reports=None):
        super().__init__(message)
        self.t = t
        self.reports = [] if reports is None else reports

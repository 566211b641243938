"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "CescopError",
    "InvalidSpaceError",
    "WeightParseError",
    "NonConvergentError",
    "UndefinedStieltjesError",
    "StieltjesMismatchError",
    "PreconditionFailedError",
    "DegenerateRatioError",
]


class CescopError(Exception):
    """Base class for package-specific failures."""


class InvalidSpaceError(CescopError):
    """A space specification violates its nontriviality requirements."""

    def __init__(self, message: str, witness: float | None = None):
        super().__init__(message)
        self.witness = witness


class WeightParseError(CescopError):
    """The textual weight expression could not be parsed."""


class NonConvergentError(CescopError):
    """Adaptive refinement stalled without reaching tolerance or a
    divergence verdict."""


class UndefinedStieltjesError(CescopError):
    """The integrator charges an infinite plateau of the integrator
    function where the integrand does not vanish."""


class StieltjesMismatchError(CescopError):
    """The two independent evaluation paths of a Stieltjes integral
    disagree beyond their combined error bounds."""

    def __init__(self, message: str, partition: float, density: float):
        super().__init__(message)
        self.partition = partition
        self.density = density


class PreconditionFailedError(CescopError):
    """A theorem hypothesis (admissibility, nondegeneracy, exponent range)
    does not hold for the supplied data."""

    def __init__(self, message: str, gate: str = ""):
        super().__init__(message)
        self.gate = gate


class DegenerateRatioError(CescopError):
    """Every candidate in a ratio maximization produced 0/0 or oo/oo."""

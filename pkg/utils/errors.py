"""
Exception hierarchy for the Kolmogorov laboratory.
"""

from typing import Iterable, Optional


class KlabError(Exception):
    """Base class for every error raised by the library."""


class InsufficientDerivativeData(KlabError):
    """A computation needs coefficient derivatives that were not registered."""

    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(set(missing))
        super().__init__("insufficient derivative data: missing " + ", ".join(self.missing))


class GridTooCoarse(KlabError):
    """A grid has fewer points per axis than a stencil needs."""

    def __init__(self, n: int, minimum: int):
        self.n = n
        self.minimum = minimum
        super().__init__(f"grid too coarse: {n} points per axis, at least {minimum} required")


class DomainError(KlabError, ValueError):
    """An argument lies outside the domain of a formula."""


class UnsupportedOperation(KlabError):
    """The requested variant is not implemented (e.g. p <= 1 outside the p=1 pathway)."""


class SolverBlowUp(KlabError):
    """The time stepper produced a non-finite value."""

    def __init__(self, time: float):
        self.time = time
        super().__init__(f"non-finite value produced at t={time:.6g}")


class TightnessError(KlabError):
    """No tight evolution system of measures could be resolved."""


class ScenarioError(KlabError):
    """A scenario file could not be parsed or references unknown entries."""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)

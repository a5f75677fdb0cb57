"""Exception hierarchy for the nfvpower optimizer."""

from __future__ import annotations


class NfvError(Exception):
    """Base class for every error raised by the optimizer package."""


class ParameterError(NfvError, ValueError):
    """A function was called outside its stated domain."""


class TopologyError(NfvError):
    """Topology construction or lookup failed."""


class DemandError(NfvError):
    """Traffic demand could not be derived (overloaded cell, zero fronthaul)."""


class CapacityError(NfvError):
    """A device, link or server was loaded beyond its capacity."""


class ModelError(NfvError):
    """The algebraic model is malformed (duplicate or unknown names)."""


class DecodeError(NfvError):
    """A solver assignment could not be mapped back to a Solution."""


class InfeasibleSolutionError(NfvError):
    """A Solution violates model constraints.

    ``violations`` lists the names of the violated constraints.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class SolverConfigError(NfvError):
    """The external solver is not available or badly configured."""


class PlacementError(NfvError):
    """A heuristic could not place a demand."""

    def __init__(self, message: str, rrh: int | None = None):
        super().__init__(message)
        self.rrh = rrh


class GuardError(NfvError):
    """Instance is too large for the exhaustive oracle."""


class HarnessError(NfvError):
    """Experiment configuration or reporting failure."""

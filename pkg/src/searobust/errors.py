"""Exception hierarchy shared across the package."""


class SeaRobustError(Exception):
    """Base class for all package errors."""


class ParameterError(SeaRobustError, ValueError):
    """Invalid physical or controller parameter."""


class StructureError(SeaRobustError, ValueError):
    """A vector does not have the structure an operation requires."""


class SynthesisError(SeaRobustError):
    """Controller synthesis failed (ill-conditioned transformation)."""


class CertificationError(SeaRobustError):
    """Lyapunov certification of a gain vector failed."""


class DivergenceError(SeaRobustError):
    """Simulation produced a non-finite value."""

    def __init__(self, message, joint=None, time=None):
        super().__init__(message)
        self.joint = joint
        self.time = time


class ScenarioError(SeaRobustError, ValueError):
    """Scenario file could not be parsed or failed validation."""

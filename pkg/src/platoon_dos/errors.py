"""Exception types raised across the package."""


class PlatoonError(Exception):
    """Base class for all package errors."""


class DimensionError(PlatoonError, ValueError):
    pass


class DomainError(PlatoonError, ValueError):
    pass


class StructureError(PlatoonError, ValueError):
    pass


class ReconstructionError(PlatoonError):
    """Physical state cannot be recovered (vehicle stopped or reversing)."""

    def __init__(self, message, s=None, vehicle=None, trace=None):
        super().__init__(message)
        self.s = s
        self.vehicle = vehicle
        self.trace = trace


class ExtractionError(PlatoonError):
    """Gain extraction failed because Z1 is singular at the solution."""


class UndefinedGainError(PlatoonError):
    """L2 gain requested for an unstable closed-loop slice."""


class ConfigError(PlatoonError, ValueError):
    pass

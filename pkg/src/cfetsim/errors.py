"""Exception types shared across the package."""


class CfetSimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CfetSimError):
    """Invalid run configuration or input parameters."""


class GeometryError(CfetSimError):
    """Region construction or routing failure."""


class RefinementError(GeometryError):
    """Requested mesh resolution cannot resolve a region sanely."""


class IntegrityError(GeometryError):
    """A labeled conductor is not a single face-connected component."""


class RegionNotFoundError(GeometryError):
    """A named region or label does not exist on the grid."""


class MaterialError(CfetSimError):
    """Unknown material or invalid material property."""


class SingularSystemError(CfetSimError):
    """The assembled linear system has no unique solution."""


class ConvergenceError(CfetSimError):
    """Iterative solver did not reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CouplingDivergenceError(ConvergenceError):
    """Electro-thermal fixed-point loop failed to settle."""


class CalibrationError(CfetSimError):
    """A calibration stage could not reach its target."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class ConnectivityError(CfetSimError):
    """Terminals do not lie on one connected conductor."""


class ComparisonError(CfetSimError):
    """Netlist comparison has no shared elements."""


class NetlistError(CfetSimError):
    """Malformed netlist or floating node."""


class TransientFailureError(CfetSimError):
    """Newton iteration failed even at the minimum step size."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class MeasurementError(CfetSimError):
    """A waveform lacks the crossings needed for the measurement."""

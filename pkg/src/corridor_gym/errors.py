"""Exception hierarchy shared by every corridor_gym module."""


class CorridorGymError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CorridorGymError, ValueError):
    """A parameter or configuration value is out of its allowed range."""


class ContractViolation(CorridorGymError, RuntimeError):
    """An operation was called in a state its contract forbids."""


class InputError(CorridorGymError, ValueError):
    """An input file or record stream could not be used."""


class ParseError(InputError):
    """A structured file is malformed; message carries line/field context."""


class ValidationError(CorridorGymError, ValueError):
    """A structure parsed fine but references are inconsistent."""


class LaneExhaustionError(CorridorGymError):
    """No free altitude lane on an OD pair at a flight's departure time."""


class UndefinedRatioError(CorridorGymError, ZeroDivisionError):
    """A safety ratio was requested with a zero unequipped denominator."""


class CheckpointError(CorridorGymError):
    """A policy checkpoint is incompatible or corrupt."""


class ProtocolError(CorridorGymError):
    """A wire-protocol message was malformed or referenced unknown state."""


class TrainingAborted(CorridorGymError, RuntimeError):
    """A rollout worker failed; partial outputs were kept on disk."""

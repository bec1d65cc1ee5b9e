"""
Error hierarchy for the dispatch domain.
"""


class DispatchError(Exception):
    """Base class for every error raised by the dispatch services."""


class ConfigError(DispatchError):
    """An experiment or instance configuration is invalid or inconsistent."""


class PathFileError(DispatchError):
    """A sample-path file is malformed."""


class SchemaVersionError(PathFileError):
    """A sample-path file was written with an unsupported schema version."""


class UnknownCustomerError(DispatchError):
    """A plan references a customer id absent from the customer lookup."""


class InconsistentActionError(DispatchError):
    """An action claims a fleet whose assignment option does not exist."""


class PlanInvariantError(DispatchError):
    """A route plan violates one of its feasibility conditions."""


class ModelFormatError(DispatchError):
    """A serialized network payload is corrupt or of another format version."""


class CheckpointError(DispatchError):
    """Base class for network-bank checkpoint problems."""


class MissingCheckpointError(CheckpointError):
    """A learned policy was requested without a checkpoint file."""


class CheckpointMismatchError(CheckpointError):
    """A checkpoint was trained for another fleet or feature set."""


class InfeasibleParamsError(DispatchError):
    """Analytic parameters describe a drone that cannot return before the horizon."""


class PolicySpecError(DispatchError):
    """A policy specification string cannot be parsed."""

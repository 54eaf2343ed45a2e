"""Exception types shared across the package."""


class SpinalError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SpinalError):
    """Operands have incompatible or invalid shapes."""


class ContractError(SpinalError):
    """A call violated an operation's precondition."""


class ConfigurationError(SpinalError):
    """A configuration object is internally inconsistent."""


class DecodeError(SpinalError):
    """An image byte stream could not be decoded."""


class LayoutError(SpinalError):
    """A dataset directory does not have the expected folder-per-class layout."""


class SplitError(SpinalError):
    """A dataset cannot be split as requested."""


class EvaluationError(SpinalError):
    """Evaluation was asked to run on unusable data."""


class OracleError(SpinalError):
    """The gradient-check oracle detected a non-deterministic program."""


class CheckpointError(SpinalError):
    """A checkpoint file is malformed or inconsistent."""

"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Operand shapes do not match the operation's contract."""


class ParameterError(ValueError):
    """An argument value is outside its allowed range."""


class FormatError(ValueError):
    """A binary container (IDX file, params file) is malformed."""


class LengthError(FormatError):
    """A binary container is truncated or has trailing bytes."""


class ConsistencyError(FormatError):
    """Two related files disagree (e.g. image/label counts)."""


class ConfigError(ValueError):
    """A configuration is internally inconsistent or has unknown keys."""


class ContractError(ValueError):
    """A call violates a documented precondition (e.g. unlabeled data where labels are required)."""

"""Exception hierarchy shared by every mfgan module.

The CLI maps the first three families onto distinct exit codes; the rest are
programming-contract failures that surface as runtime errors.
"""


class MfganError(Exception):
    """Base class for all mfgan failures."""


class ConfigError(MfganError):
    """Invalid, unknown or inconsistent configuration values."""


class DataError(MfganError):
    """Unreadable or malformed input data, unmapped items, unknown users."""


class CheckpointError(MfganError):
    """Checkpoint magic/version/digest/shape mismatch or a truncated file."""


class ShapeError(MfganError, ValueError):
    """Tensor operands with incompatible shapes."""


class ContractError(MfganError, RuntimeError):
    """A caller broke an operation's precondition."""


class NonFiniteError(MfganError, FloatingPointError):
    """A forward op produced NaN."""

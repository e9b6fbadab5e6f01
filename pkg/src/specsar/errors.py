"""Exception hierarchy shared by every subpackage.

The CLI maps these onto process exit codes, so keep the classes coarse.
"""


class SpecSarError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class DimensionError(SpecSarError, ValueError):
    """Tensor shapes or geometry are incompatible."""

    exit_code = 2


class ConfigError(SpecSarError, ValueError):
    """A configuration value is invalid or unknown."""

    exit_code = 2


class ContractError(SpecSarError, RuntimeError):
    """An API precondition was violated (e.g. backward from a non-scalar)."""

    exit_code = 2


class DataError(SpecSarError, ValueError):
    """Input data is out of range (e.g. a label outside the class set)."""

    exit_code = 3


class FormatError(SpecSarError, ValueError):
    """A binary file is malformed. ``offset`` is the byte where parsing failed."""

    exit_code = 3

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericalError(SpecSarError, ArithmeticError):
    """Non-finite loss or a failed gradient check."""

    exit_code = 4

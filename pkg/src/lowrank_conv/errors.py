"""Exception hierarchy shared by every module.

Each class carries the process exit code the command line front end uses
when the error escapes a subcommand.
"""


class LowRankError(Exception):
    exit_code = 1


class FormatError(LowRankError):
    """Unreadable or malformed tensor / manifest file."""

    exit_code = 3


class DimensionError(LowRankError, ValueError):
    """Array shapes that do not fit together."""

    exit_code = 4


class RankError(LowRankError, ValueError):
    """Requested rank outside the admissible range, or no spectrum to rank."""

    exit_code = 5


class NumericError(LowRankError, ArithmeticError):
    """Non-finite input, or results that fail a numerical consistency check."""

    exit_code = 6


class TrainingError(LowRankError):
    """Training diverged. ``epoch`` is the 0-based epoch where it happened."""

    exit_code = 7

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StateError(LowRankError):
    """A cached forward pass does not belong to the model or batch it is used with."""

    exit_code = 8


class ArgumentError(LowRankError, ValueError):
    exit_code = 9

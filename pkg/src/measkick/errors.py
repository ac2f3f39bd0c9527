"""Exception hierarchy shared by the library and the command line.

Every error carries a machine-readable ``category`` and the process exit
code the CLI uses for it.
"""


class MeasKickError(Exception):
    category = "numerical"
    exit_code = 6


class ConfigError(MeasKickError, ValueError):
    category = "config"
    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
        self.message = message


class CapacityError(MeasKickError):
    category = "capacity"
    exit_code = 3


class ImpossibleOutcomeError(MeasKickError):
    category = "impossible-outcome"
    exit_code = 4


class TruncationError(MeasKickError):
    category = "truncation"
    exit_code = 5


class NumericalError(MeasKickError):
    category = "numerical"
    exit_code = 6


class DegenerateStateError(NumericalError):
    """The branch sum has (numerically) vanishing norm."""

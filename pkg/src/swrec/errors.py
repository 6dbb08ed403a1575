"""Exception hierarchy shared by the library and the CLI.

Each class carries a distinct process exit code so shell callers can
dispatch on the failure kind.
"""


class SwrecError(Exception):
    exit_code = 1


class ParseError(SwrecError):
    """Malformed input record; carries the offending line number."""

    exit_code = 2

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class InputError(SwrecError):
    """Unreadable or missing input file."""

    exit_code = 3


class EmptyDatasetError(SwrecError):
    """All events were removed by filtering."""

    exit_code = 4


class ConfigurationError(SwrecError):
    exit_code = 5


class ConvergenceError(SwrecError):
    """Iterative solver failed to reach tolerance; reports worst residual."""

    exit_code = 6

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericError(SwrecError):
    """Non-finite value encountered during computation."""

    exit_code = 7


class IntegrityError(SwrecError):
    """Internal structure violated its invariants (e.g. bad cluster id)."""

    exit_code = 8


class TrainingDivergedError(SwrecError):
    exit_code = 9

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch

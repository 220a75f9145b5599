"""Exception hierarchy shared across the package.

Every error raised by the library derives from :class:`RemgofError`, so
callers (notably the CLI) can map failures onto a small set of exit codes.
"""


class RemgofError(Exception):
    """Base class for all package errors."""


class ValidationError(RemgofError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """A file row could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class TieError(ValidationError):
    """Event timestamps are not strictly increasing.

    ``rows`` holds the 0-based indices of the offending events.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)


class OrderError(ValidationError):
    """An event or query arrived out of temporal order."""


class LevelError(ValidationError):
    """A random-effect term met an actor level outside its registry."""


class SamplingError(RemgofError):
    """A risk set was too small to draw the requested controls."""

    def __init__(self, message, event_index=None):
        super().__init__(message)
        self.event_index = event_index


class UnsupportedError(RemgofError):
    """Requested operation exists only on a different code path."""


class ConvergenceError(RemgofError):
    """Optimizer failed to converge; ``trace`` holds the iteration log."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class SingularError(RemgofError):
    """A matrix was singular beyond repair; ``rank`` is the effective rank."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateError(RemgofError):
    """A test statistic is undefined (zero information / zero variance)."""


class EvaluationError(RemgofError):
    """A user-supplied statistic produced a non-finite value."""

    def __init__(self, message, event_index=None):
        super().__init__(message)
        self.event_index = event_index


class DgpError(RemgofError):
    """Simulation cannot proceed (e.g. total intensity is zero)."""

"""Exception hierarchy.

Two branches matter for callers: :class:`ConfigError` means the request
itself is inconsistent (bad flags, bad probability vectors, bad schema
setup), while :class:`DataError` means the supplied data cannot support
the requested computation.  The CLI maps them to exit codes 2 and 1.
"""

from __future__ import annotations


class ReofairError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ReofairError):
    """The configuration or request is invalid."""


class DataError(ReofairError):
    """The input data cannot support the requested computation."""


class SchemaError(DataError):
    """A row or header does not match the declared schema."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ParseError(DataError):
    """A cell could not be parsed; carries the 1-based file line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class InsufficientDataError(DataError):
    """A traffic side is empty where counts are required."""


class DegenerateGroupError(DataError):
    """A group has zero randomized-traffic positives, so its utility is undefined."""

    def __init__(self, message: str, group: int | None = None):
        super().__init__(message)
        self.group = group


class DegenerateUtilitiesError(DataError):
    """All group utilities are zero; relative metrics are undefined."""


class BoundaryVarianceError(DataError):
    """A rate estimate sits on {0, 1}, where the variance formula is undefined."""

    def __init__(self, message: str, group: int | None = None):
        super().__init__(message)
        self.group = group


class UnsupportedInputError(DataError):
    """The tally lacks the counters required by the requested metric."""


class MalformedSessionError(DataError):
    """A request group does not contain exactly the declared number of rows."""


class FoldDegenerateError(DataError):
    """A partition fold is too small to estimate every group."""

    def __init__(self, message: str, arm: str | None = None, fold: int | None = None):
        super().__init__(message)
        self.arm = arm
        self.fold = fold


class UnstableBootstrapError(DataError):
    """Too many bootstrap replicates were discarded as degenerate."""

    def __init__(self, message: str, discarded: int = 0, total: int = 0):
        super().__init__(message)
        self.discarded = discarded
        self.total = total


class InsufficientRandomTrafficError(DataError):
    """A monitored day has no randomized traffic under the per-day policy."""


class InvalidPilotError(ConfigError):
    """A pilot estimate handed to the planner is out of range."""


class DegenerateGroupWarning(UserWarning):
    """A group rate estimate is zero; downstream utilities will fail or be zero."""

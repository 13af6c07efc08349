"""
Exception hierarchy for the aging toolkit.

Two families, matching the CLI exit codes:
- DataError (exit 2): empty, malformed or unreadable inputs.
- StatisticalPreconditionError (exit 3): data is well-formed but a test
  cannot be computed on it (too short, all tied, degenerate groups, ...).

Both derive from ValueError so callers that only know about ValueError
still catch them.
"""


class AgingToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class DataError(AgingToolkitError, ValueError):
    """Input data is empty or invalid."""


class StatisticalPreconditionError(AgingToolkitError, ValueError):
    """A statistical procedure's precondition does not hold."""


# -- data errors -------------------------------------------------------------

class BadHeader(DataError):
    pass


class NonNumericField(DataError):
    pass


class MalformedDuration(DataError):
    pass


class MalformedGcLine(DataError):
    pass


class MalformedStatLine(DataError):
    pass


class InvalidPlan(DataError):
    pass


class InvalidSpec(DataError):
    pass


class IoFailure(DataError):
    pass


class NoRecords(DataError):
    pass


# -- statistical preconditions -----------------------------------------------

class TooShort(StatisticalPreconditionError):
    pass


class AllTied(StatisticalPreconditionError):
    pass


class ZeroVariance(StatisticalPreconditionError):
    pass


class ZeroRange(StatisticalPreconditionError):
    pass


class ZeroGroupVariance(StatisticalPreconditionError):
    pass


class DegenerateGroups(StatisticalPreconditionError):
    pass


class LengthMismatch(StatisticalPreconditionError):
    pass


class SingleLevel(StatisticalPreconditionError):
    pass


class UnpairedConfig(StatisticalPreconditionError):
    pass


class ZeroBaseline(StatisticalPreconditionError):
    pass

"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PatternsatError(Exception):
    pass


class PatternError(PatternsatError, ValueError):
    """Malformed pattern or a pattern outside the supported size range."""


class PatternSizeError(PatternError):
    pass


class QueryParseError(PatternsatError, ValueError):
    """Raised when JSON input does not conform to a schema.

    ``location`` is a JSONPath-like pointer to the offending value.
    """

    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.message = message
        self.location = location


class FilterError(PatternsatError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "filter error"


class RuleError(PatternsatError, ValueError):
    """A rewrite rule was rejected (non-opaque matcher, bad variables, ...)."""


class CostTableError(PatternsatError, ValueError):
    pass


class ExtractionError(PatternsatError, RuntimeError):
    pass

"""Exception hierarchy shared by all recaudit modules."""

from __future__ import annotations


class AuditError(Exception):
    """Base class for every error raised by this package."""


class LoadError(AuditError):
    """A data file could not be parsed.

    Carries the offending path and 1-based line number so the user can fix
    the input rather than guess.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DatasetError(AuditError):
    """The parsed data violates a dataset-level contract (empty after
    filtering, duplicate user/item pairs, out-of-range ratings, ...)."""


class ConfigError(AuditError):
    """Configuration is invalid. ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class EngineError(AuditError):
    """A predictor could not be fitted under its preconditions."""


class StageError(AuditError):
    """A pipeline stage failed; names the stage and chains the cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")

"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit codes: ``DataError`` (bad or
inconsistent inputs, exit code 2) and ``ProviderError`` (an external model
backend failed or was over budget, exit code 3). Everything else is a plain
``ConfigError`` usage problem (exit code 1).
"""

from __future__ import annotations


class RevmatchError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(RevmatchError):
    """Invalid run configuration or command usage."""


class DataError(RevmatchError):
    """Malformed, inconsistent, or missing input data."""


class MalformedRecord(DataError):
    """A record in an input file failed parsing or a field check."""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class DuplicateId(DataError):
    """An identifier (or identifier pair) occurs more than once."""


class DanglingReference(DataError):
    """An annotation references a paper or reviewer that does not exist."""


class EmptyHistory(DataError):
    """A reviewer has no publications to digest."""


class SchemaViolation(DataError):
    """No profiling run produced output matching the profile schema."""


class UnparseableOutput(DataError):
    """Model output contained no usable JSON payload."""


class UnknownTemplate(DataError):
    """A prompt template id is not present in the registry."""


class DimensionMismatch(DataError):
    """Embedding vectors of different dimensionality were combined."""


class PoolMismatch(DataError):
    """Two rank maps do not cover the same reviewer set."""


class InvalidThresholds(DataError):
    """Discretization thresholds are not strictly increasing."""


class VerdictOutsideCandidates(DataError):
    """A committee verdict references a reviewer outside the scored pool."""


class MissingTable(DataError):
    """An annotated paper has no ranking table to evaluate."""


class ProviderError(RevmatchError):
    """Base class for external provider failures."""


class ProviderUnavailable(ProviderError):
    """A provider call failed after all retries (or offline mode forbade it)."""


class TransientProviderError(ProviderError):
    """A retryable provider failure (rate limit, 5xx, timeout)."""


class ProfilerUnavailable(ProviderError):
    """Every profiling attempt for one subject failed at the provider level."""


class JudgeUnavailable(ProviderError):
    """The committee judge backend could not be reached."""


class BudgetExceeded(ProviderError):
    """The configured provider call ceiling was reached."""

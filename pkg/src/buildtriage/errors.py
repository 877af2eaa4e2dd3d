"""Exception taxonomy.

Two branches matter to callers: DataError covers everything wrong with the
inputs (bad records, degenerate samples, mismatched schemas) and maps to CLI
exit code 2, while InternalError marks a broken invariant inside the library
and maps to exit code 3.
"""

from __future__ import annotations


class BuildTriageError(Exception):
    """Base class for every error raised by this package."""


class DataError(BuildTriageError):
    """The input data cannot be processed as requested."""


class InternalError(BuildTriageError):
    """An internal invariant was violated; this is a bug, not a data problem."""


class MalformedRecord(DataError):
    """A corpus line that cannot be turned into an issue report."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyCorpus(DataError):
    """The corpus file contained no usable issue reports."""


class NoBotFound(DataError):
    """No comment author looks like the CI bot."""


class NotFlagged(DataError):
    """Time misspent is only defined for flagged build events."""


class LengthMismatch(DataError):
    """Paired sequences have different lengths."""


class SingularDesign(DataError):
    """The feature design matrix does not support a least-squares fit."""


class DegenerateLabels(DataError):
    """Training labels carry no positive weight, or no negative weight."""


class FeatureMismatch(DataError):
    """An input row has a different width than the fitted model expects."""


class EmptyHoldout(DataError):
    """The held-out positive set is empty, so c cannot be estimated."""


class InsufficientPositives(DataError):
    """Too few labeled positives to fit a model."""


class DegenerateG(DataError):
    """The base learner scored an example at (or above) 1, so the
    unlabeled weight is undefined."""


class TooFewSamples(DataError):
    """Not enough rows for the requested statistical procedure."""


class OverlapError(DataError):
    """Sets that must be disjoint share at least one row."""


class FoldTooSmall(DataError):
    """A group has fewer rows than the requested number of folds."""


class MissingEventLinkage(DataError):
    """An evaluation row cannot be traced back to its build event."""


class FeatureSchemaMismatch(DataError):
    """Per-project feature tables disagree on their column lists."""


class NegativeLatency(DataError):
    """A build event precedes the patch that supposedly triggered it."""


class BadSpec(DataError):
    """A synthetic-data specification has out-of-range parameters."""

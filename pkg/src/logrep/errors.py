"""Shared exception types.

Everything user-facing raises one of these so the CLI can map failures to
short messages and distinct exit codes instead of tracebacks.
"""

from __future__ import annotations


class LogrepError(Exception):
    """Base class for all errors raised on purpose by this package."""


class CorpusError(LogrepError):
    """Raw log ingestion, grouping, splitting or labelling failed."""


class ParserError(LogrepError):
    """Template mining or template store I/O failed."""


class RepresentError(LogrepError):
    """Feature building failed (bad table file, incompatible levels, ...)."""


class ModelError(LogrepError):
    """Model training, prediction or checkpoint I/O failed."""


class EvalError(LogrepError):
    """Metric computation was asked for something ill-defined."""


class RankingError(LogrepError):
    """Statistical ranking got unusable input."""


class ConfigError(LogrepError):
    """Configuration file is invalid. Message lists every problem found."""

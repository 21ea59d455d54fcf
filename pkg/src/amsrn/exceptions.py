"""Exception hierarchy shared by every module of the package."""


class AmsrnError(Exception):
    """Base class for all package errors."""


class ShapeError(AmsrnError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(AmsrnError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class DomainError(AmsrnError, ValueError):
    """An argument lies outside the domain of an operation."""


class VocabularyError(AmsrnError, ValueError):
    """A token id is outside the vocabulary."""


class IngestionError(AmsrnError, ValueError):
    """A corpus could not be ingested."""


class ConfigurationError(AmsrnError, ValueError):
    """Configuration, checkpoint and data disagree."""


class TrainingError(AmsrnError, RuntimeError):
    """Training diverged."""


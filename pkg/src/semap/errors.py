"""Exception types shared across the package.

All data-level failures derive from ValueError so callers that do not care
about the distinction can catch one base class; the CLI maps any of these
to exit code 2.
"""


class SemapError(ValueError):
    """Base class for all data/format errors raised by this package."""


class InvalidInputError(SemapError):
    """An argument violates an operation's precondition (non-finite, empty, ...)."""


class ShapeError(SemapError):
    """Dimension mismatch between operands."""


class FormatError(SemapError):
    """A file does not conform to its declared on-disk format."""


class CapacityError(SemapError):
    """A mapping cannot be built because the target index space is exhausted."""


class CoverageError(SemapError):
    """A required class has no supporting examples."""


class HyperparameterError(SemapError):
    """A mapping hyperparameter is outside its legal range."""


class TrainingDivergedError(SemapError):
    """Training aborted on a non-finite loss; message names epoch and batch."""

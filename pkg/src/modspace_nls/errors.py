"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RepresentationError(ValueError):
    """A field was passed in the wrong representation (physical vs spectral)."""


class GridMismatchError(ValueError):
    """Two objects that must share a grid do not."""


class ResolutionError(ValueError):
    """The grid is too coarse for the requested construction."""


class TruncationError(RuntimeError):
    """A band decomposition dropped too much spectral mass to be usable."""


class ExperimentInvalidError(RuntimeError):
    """A run violated its validity conditions (e.g. mass escaped the box)."""


class ConfigError(ValueError):
    """A configuration file failed validation.

    ``field`` is the dotted path of the offending key, so callers can report
    exactly which entry to fix.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DivergenceError(RuntimeError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class IterationLimitError(RuntimeError):
    """The fixed-point iteration hit its iteration cap before converging."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics

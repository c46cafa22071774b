"""Exception types raised across the pipeline."""


class RsdfError(Exception):
    """Base class for all pipeline errors."""


class FormatError(RsdfError):
    """A file could not be read or has an unexpected layout or bit depth."""


class AlignmentError(RsdfError):
    """Inputs that must share dimensions do not."""


class DegenerateInputError(RsdfError):
    """Input too small or too uniform for the requested operation."""


class ShapeError(RsdfError):
    """An array has the wrong shape for the fixed layout."""


class ConfigError(RsdfError):
    """Invalid configuration value or empty dataset."""


class NumericalError(RsdfError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual

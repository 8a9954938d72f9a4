"""
Exception hierarchy for the VQC-CS app.

Management commands map these onto stable exit codes (see ``EXIT_CODES``).
"""


class VqccsError(Exception):
    """Base class for every error raised by the app."""


class ParameterError(VqccsError, ValueError):
    """A numeric argument is outside its valid range."""


class ConfigurationError(VqccsError):
    """Invalid experiment configuration or unresolved circuit binding."""

    def __init__(self, message, field_errors=None):
        super().__init__(message)
        self.field_errors = field_errors or {}


class UnsupportedBindingError(VqccsError):
    """A parameter does not enter the circuit through a rotation angle."""


class SingularityError(VqccsError):
    """Pseudo-inverse requested for a rank-deficient pilot matrix."""


class DegenerateDenoiserError(VqccsError):
    """Average denoiser derivative equals one, divergence correction undefined."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class NumericalError(VqccsError):
    """Non-finite value in a loss or gradient."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingDivergedError(NumericalError):
    """Training produced a non-finite loss; carries the last finite checkpoint."""

    def __init__(self, message, checkpoint=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.checkpoint = checkpoint


class UndefinedMetricError(VqccsError):
    """Metric cannot be computed from the given labels (e.g. a single class)."""


class ShapeMismatchError(VqccsError):
    """Stored parameters do not fit the requested scenario."""

    def __init__(self, message, expected=None, found=None):
        super().__init__(message)
        self.expected = expected
        self.found = found


class DatasetMissingError(VqccsError, FileNotFoundError):
    """A dataset file required by a command does not exist."""


# Exit codes used by the management commands.
EXIT_CODES = {
    ConfigurationError: 1,
    ParameterError: 1,
    ShapeMismatchError: 1,
    DatasetMissingError: 2,
    TrainingDivergedError: 3,
    NumericalError: 3,
}


def exit_code_for(error):
    """Return the documented exit code for ``error`` (1 when unknown)."""
    for cls in type(error).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    if isinstance(error, OSError):
        return 2
    return 1

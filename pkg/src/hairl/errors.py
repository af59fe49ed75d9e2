"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameter values.

    ``errors`` holds every problem found, so callers can report them together.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ShapeError(ValueError):
    """Array dimensions do not match what an operation expects."""


class StateError(RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class IllegalActionError(ValueError):
    """An action outside the current legal-action mask."""


class UnsupportedMetricError(ValueError):
    """A metric was requested for an environment it does not apply to."""


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite; ``diagnostics`` carries the offending values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ExpertQualityError(RuntimeError):
    """An expert failed its quality gate within the training budget."""


class DemoFormatError(ValueError):
    """A demonstration file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DemoVersionError(DemoFormatError):
    """A demonstration file was written by an unsupported format version."""


class MissingArtifactError(FileNotFoundError):
    """An upstream stage's output is missing; ``path`` names what was expected."""

    def __init__(self, path, hint: str = ""):
        self.path = str(path)
        super().__init__(f"missing {self.path}" + (f"; {hint}" if hint else ""))

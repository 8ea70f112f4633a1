class SpecmixError(Exception):
    """Base class for all library errors."""


class ShapeError(SpecmixError, ValueError):
    pass


class NonFiniteError(SpecmixError, FloatingPointError):
    """NaN or Inf reached a place where only finite values are legal."""


class DegenerateError(SpecmixError, ValueError):
    """Input is geometrically degenerate (rank-deficient pixel cloud, zero-norm vector)."""


class FormatError(SpecmixError, ValueError):
    """Malformed file: bad magic, truncated payload, unparsable CSV, ..."""


class ConfigError(SpecmixError, ValueError):
    pass


class TrainingDivergedError(SpecmixError, RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint

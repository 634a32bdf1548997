class ConfigurationError(ValueError):
    """Bad configuration: sizes, class counts, weights, flags."""


class InvalidInputError(ValueError):
    """Input data violates a precondition (non-finite values, bad labels, shapes)."""


class NumericalError(RuntimeError):
    """Training diverged (NaN/inf loss or gradient)."""

    def __init__(self, message, epoch=None, term=None):
        super().__init__(message)
        self.epoch = epoch
        self.term = term


class CheckpointError(IOError):
    """Checkpoint file is unreadable or does not match the configuration."""

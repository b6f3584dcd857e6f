"""Exception types shared across the package."""


class CsiUqError(Exception):
    """Base class for data/runtime errors raised by the library."""


class ConfigError(CsiUqError, ValueError):
    """Invalid channel, pipeline or experiment configuration."""


class DegenerateWindow(CsiUqError, ValueError):
    """A window or series carries no usable variation."""


class DivergenceError(CsiUqError, FloatingPointError):
    """Training produced a non-finite loss or activation.

    Attributes
    ----------
    history : list or None
        Per-epoch records collected before the failure, if any.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history

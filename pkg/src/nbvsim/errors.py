"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument value (bad dimension, out-of-range fraction, ...)."""


class BoundsError(ValueError):
    """A point fell outside the voxel grid it was mapped into."""


class GridMismatchError(ValueError):
    """Two grids that must share origin/edge/dims do not."""


class UndefinedCoverageError(ValueError):
    """Coverage fraction requested against a grid with no occupied cells."""


class PredictorError(RuntimeError):
    """A shape predictor failed to produce a prediction."""


class DeterminismError(RuntimeError):
    """A replayed run diverged from its recorded trace."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ScenarioError(ValueError):
    """A scenario file failed validation."""


class BridgeError(RuntimeError):
    """Base class for external-predictor bridge failures."""


class BridgeTimeout(BridgeError):
    """The external process did not answer within the configured timeout."""


class BridgeProtocolError(BridgeError):
    """Malformed frame, bad handshake, or unexpected frame type."""


class BridgeSizeMismatch(BridgeError):
    """The external prediction did not contain the expected point count."""

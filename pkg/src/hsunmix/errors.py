"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Dimension or mode mismatch between operands."""


class NonFiniteError(ValueError):
    """Input contains NaN or infinite entries."""


class DegenerateInputError(ValueError):
    """Input is valid in shape but degenerate (e.g. all-zero tensor)."""


class SingularSystemError(ValueError):
    """A linear system in an update is singular; see message for the remedy."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FileFormatError(ValueError):
    """A data file does not conform to its expected on-disk format."""

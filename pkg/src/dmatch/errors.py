"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array shapes of the inputs do not agree."""


class CapacityError(ValueError):
    """An exhaustive routine was asked to enumerate too many labelings."""


class ConvergenceError(RuntimeError):
    """An iterative construction hit its round limit.

    The largest remaining residual is kept in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(ValueError):
    """Solver or step-size settings violate a documented precondition."""


class ImageFormatError(ValueError):
    """A PGM/PPM/PFM/FLO file could not be parsed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset

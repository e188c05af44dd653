class SGIMCError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(SGIMCError, ValueError):
    """Operands do not conform."""


class LabelError(SGIMCError, ValueError):
    """Labels outside {-1, +1} for the logistic loss."""


class NumericalError(SGIMCError, FloatingPointError):
    """An iterate became non-finite."""


class ColdStartError(SGIMCError, IndexError):
    """Residual factors were requested for a row or column unseen in training."""

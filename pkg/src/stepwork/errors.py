"""Exception types shared across the pipeline."""


class StepworkError(Exception):
    """Base class for all stepwork failures."""


class GridTooNarrow(StepworkError):
    """A density carries non-negligible mass at the grid boundary."""


class MassLeak(StepworkError):
    """A work distribution lost probability mass to grid truncation."""


class NonPositiveAverage(StepworkError):
    """Quadrature of the exponential work average returned a non-positive value."""


class DensityFloor(StepworkError):
    """A log-ratio residual was requested where a density is below the floor."""


class EnumerationCap(StepworkError):
    """Pathway enumeration requested outside the exact-enumeration regime."""

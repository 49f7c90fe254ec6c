"""Exception hierarchy shared by all bhatt modules."""


class BhattError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BhattError, ValueError):
    """Parameter value lies outside the model's open domain."""


class DegenerateModel(BhattError, ValueError):
    """Fewer than two support points survive pruning."""


class StepError(BhattError, ValueError):
    """A finite-difference stencil would leave the model domain."""


class DivergentBound(BhattError):
    """An estimator was requested for a bound that diverges."""


class SupportError(BhattError, ValueError):
    """A density derivative has weight outside the support of rho."""


class SupportMismatch(BhattError, ValueError):
    """Estimator table and model disagree on the support."""


class DimensionMismatch(BhattError, ValueError):
    """Operator dimensions are inconsistent."""


class GridMismatch(BhattError, ValueError):
    """Two curves do not share a grid, or the grid misses the interval."""


class ConvergenceError(BhattError, ArithmeticError):
    """Bessel normalisation sum under- or overflowed."""


class FormatError(BhattError, ValueError):
    """Malformed model or density file."""

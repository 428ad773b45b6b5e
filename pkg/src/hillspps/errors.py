"""Exception and warning types raised by hillspps."""


class HillSppsError(Exception):
    """Base class for all library errors."""


class SamplingError(HillSppsError, ValueError):
    pass


class PotentialError(HillSppsError, ValueError):
    """A scalar potential violates periodicity or the zero-mean condition."""


class UnsupportedClosedForm(HillSppsError, NotImplementedError):
    pass


class TableError(HillSppsError, ValueError):
    pass


class TruncationWindowError(HillSppsError, ValueError):
    """Requested spectral window leaves the range where the truncated series is trusted."""

    def __init__(self, message, usable):
        super().__init__(f"{message}; usable window is [{usable[0]:.15g}, {usable[1]:.15g}]")
        self.usable = usable


class IntertwiningError(HillSppsError, ZeroDivisionError):
    pass


class DegenerateMatchingError(HillSppsError, ArithmeticError):
    pass


class NoRealSpinorError(HillSppsError, ValueError):
    pass


class BlowUpError(HillSppsError, FloatingPointError):
    def __init__(self, x, lam=None):
        where = f"x = {x:.15g}" + ("" if lam is None else f", lambda = {lam:.15g}")
        super().__init__(f"non-finite state during integration at {where}")
        self.x = x
        self.lam = lam


class TruncationWarning(UserWarning):
    """Evaluation outside the trusted truncation radius of the series."""

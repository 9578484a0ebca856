"""Exception types shared across the package."""


class DensecountError(Exception):
    """Base class for all errors raised by densecount."""


class InsufficientNeighbors(DensecountError):
    """A point has fewer than ``k`` other points to measure against."""


class OutOfBounds(DensecountError, ValueError):
    pass


class ParseError(DensecountError, ValueError):
    pass


class ValidationError(DensecountError, ValueError):
    """Input parsed but violates a domain invariant.

    ``offenders`` lists the individual problems so callers can report all of
    them at once instead of failing on the first.
    """

    def __init__(self, message, offenders=()):
        self.offenders = list(offenders)
        if self.offenders:
            shown = "; ".join(str(o) for o in self.offenders[:10])
            more = len(self.offenders) - 10
            if more > 0:
                shown += f"; ... ({more} more)"
            message = f"{message}: {shown}"
        super().__init__(message)


class ConfigError(DensecountError, ValueError):
    pass


class EmptyInput(DensecountError, ValueError):
    pass

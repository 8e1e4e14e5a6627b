"""Exception hierarchy shared by all gpsobol modules."""


class GPSobolError(Exception):
    """Base class for errors raised by gpsobol."""


class InputError(GPSobolError, ValueError):
    """Invalid arguments: wrong shapes, empty index sets, bad sizes."""


class ConditioningError(GPSobolError):
    """A correlation or bordered matrix could not be factorized.

    Attributes
    ----------
    nuggets : tuple of float
        Every nugget value that was tried before giving up.
    """

    def __init__(self, message, nuggets=()):
        super().__init__(message)
        self.nuggets = tuple(nuggets)


class RankDeficiencyError(GPSobolError):
    """The GLS system F' R^-1 F (or H' R^-1 H) is singular."""


class FitError(GPSobolError):
    """Hyperparameter optimization produced no finite likelihood value."""


class DegenerateOutputError(GPSobolError):
    """An estimator denominator (output variance) vanished."""

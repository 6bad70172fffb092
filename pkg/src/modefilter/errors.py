"""Exception and warning types shared across the package."""


class ModeFilterError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(ModeFilterError):
    """Model matrices have inconsistent shapes or violate basic assumptions."""


class RankDeficient(InvalidModel):
    """The input-observability rank condition fails; the filter is ill posed.

    Raised when the dynamics-only part of the unknown input cannot be
    recovered from the measurements (the relevant product of output and
    input matrices loses column rank).  Filters refuse to be built on such
    models.
    """


class NumericalBreakdown(ModeFilterError):
    """A required inverse failed or a filter update produced non-finite values."""


class DegenerateInnovation(ModeFilterError):
    """The whitened innovation has rank zero; there is no usable residual."""


class DegenerateUpdate(ModeFilterError):
    """A Bayes update received zero total probability mass."""


class Unstable(ModeFilterError):
    """A spectral radius is at or above one; the requested limit does not exist."""


class NoSteadyState(ModeFilterError):
    """Filter gain iteration did not settle within its step budget."""


class NoConvergence(ModeFilterError):
    """A fixed-point iteration exhausted its budget before reaching tolerance."""


class ConfigError(ModeFilterError):
    """A configuration file could not be parsed or validated."""


class ModeUnreachableWarning(UserWarning):
    """A mixing step encountered a mode with zero predicted probability."""

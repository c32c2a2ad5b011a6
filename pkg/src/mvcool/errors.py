"""Exception types raised across the package."""


class MVCoolError(Exception):
    """Base class for all package errors."""


class NumericalError(MVCoolError):
    """Numerical failure (truncation, fit, optimisation). CLI exit code 3."""


class TruncationTooSmall(NumericalError):
    """The Fock-space truncation cannot represent the requested state or operator."""


class GridTooNarrow(NumericalError):
    """A grid shift would push non-negligible probability mass off the grid."""


class NoImprovement(NumericalError):
    """An optimiser failed to find parameters that lower the energy."""


class StepTooCoarse(NumericalError):
    """The integration step does not resolve the fastest noise rate."""


class FitDidNotConverge(NumericalError):
    pass


class DegenerateData(NumericalError):
    """Data carry no information about the fitted parameter (e.g. a flat curve)."""


class ConfigError(MVCoolError):
    """Invalid experiment configuration. CLI exit code 2."""


class IdentifiabilityWarning(UserWarning):
    """Fitted frequencies are not resolved over the sampled time span."""

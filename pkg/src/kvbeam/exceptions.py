"""Exception hierarchy shared by every kvbeam module."""


class KVBeamError(Exception):
    """Base class for all errors raised by kvbeam."""


class HypothesisViolation(KVBeamError):
    """A damping coefficient breaks the support or degeneracy hypotheses."""


class DivergenceError(HypothesisViolation):
    """The degeneracy ratio or an improper integral is unbounded."""


class DomainError(KVBeamError, ValueError):
    """A position lies outside the beam interval [-1, 1]."""


class AccuracyError(KVBeamError):
    """A quadrature did not reach the requested tolerance.

    The best estimate obtained so far is kept on ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ConfigurationError(KVBeamError, ValueError):
    """Invalid mesh, sweep or scenario settings."""


class InputError(KVBeamError, ValueError):
    """Input data that violates a boundary or shape constraint."""


class FitError(KVBeamError):
    """A power-law fit cannot be performed on the supplied samples."""


class OnSpectrumError(KVBeamError):
    """The resolvent was requested at (numerically) an eigenvalue."""

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class CapabilityError(KVBeamError):
    """The requested dense computation exceeds the configured size cap."""


class InstabilityError(KVBeamError):
    """A time integration produced non-finite values."""


class ConfigError(KVBeamError):
    """A scenario document failed schema validation.

    ``line`` is the 1-based line number of the offending entry when known.
    """

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field

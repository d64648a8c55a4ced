"""Exception hierarchy.

Every error raised by the library derives from :class:`ElastostripError`.
The CLI maps :class:`ConfigError` subclasses to exit code 2,
:class:`AssumptionViolation` to 4 and everything else to 3.
"""


class ElastostripError(Exception):
    """Base class for all library errors."""


class ConfigError(ElastostripError):
    pass


class InvalidMaterial(ConfigError):
    pass


class InvalidGeometry(ConfigError):
    pass


class InvalidFrequency(ConfigError):
    pass


class InvalidDiscretization(ConfigError):
    pass


class NumericalError(ElastostripError):
    """Numerical failure (exit code 3)."""


class UnsupportedOrder(NumericalError):
    pass


class EigensolverFailure(NumericalError):
    pass


class WindowViolation(NumericalError):
    """An eigenvalue sits on (or too close to) a weight line."""


class IntegratorFailure(NumericalError):
    pass


class RankAmbiguity(NumericalError):
    """Singular values fall inside the undecidable band."""


class SingularNormalization(NumericalError):
    pass


class CircleTouchesSpectrum(NumericalError):
    pass


class IndexOutOfRange(ElastostripError, IndexError):
    pass


class DegenerateForm(NumericalError):
    pass


class LineNearSpectrum(NumericalError):
    pass


class QuadratureUnderresolved(NumericalError):
    pass


class IllConditionedClosure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class AssumptionViolation(ElastostripError):
    """The spectral window assumption fails (cutoff / exceptional frequency)."""

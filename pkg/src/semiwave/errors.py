"""Exception hierarchy shared by all semiwave modules."""

from __future__ import annotations


class SemiwaveError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(SemiwaveError):
    """A constructor or operation received an out-of-contract argument."""


class QuadratureFailure(SemiwaveError):
    """Adaptive quadrature did not converge within its refinement budget."""


class DomainExceeded(SemiwaveError):
    """A transform was requested at or beyond its convergence abscissa."""


class BadBracket(SemiwaveError):
    """A speed bracket does not straddle the root-existence threshold."""


class NoAdmissibleM(SemiwaveError):
    """No admissible second exponent for the lower envelope could be found."""


class NotConverged(SemiwaveError):
    """An iterative solve exhausted its budget without meeting tolerance."""


class SandwichBroken(SemiwaveError):
    """An un-clipped iterate left the envelope band by more than the allowed
    slack; this signals a discretization bug, not a modelling failure."""


class UnboundedDerivative(SemiwaveError):
    """Numerical sampling of a derivative diverged on the working interval."""


class NoPositiveFixedPoint(SemiwaveError):
    """The balance equation f(s) = g(s) has no positive solution in range."""


class ConfigError(SemiwaveError):
    """A run configuration file is missing, malformed, or inconsistent."""

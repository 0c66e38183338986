"""Exception hierarchy.

Two families matter to callers: ``InputError`` (bad arguments or files, CLI
exit code 2) and ``NumericalError`` (a computation could not meet its
accuracy contract, CLI exit code 3).
"""

from __future__ import annotations


class WishartEdgesError(Exception):
    """Base class for every error raised by this package."""


class InputError(WishartEdgesError, ValueError):
    """Invalid arguments, models or files."""


class NumericalError(WishartEdgesError, ArithmeticError):
    """A numerical routine failed to meet its accuracy contract."""


# input-side errors
class ValidationError(InputError):
    """A value violates a documented invariant."""


class SchemaError(InputError):
    """A JSON document does not match the published schema."""


class PoleProximity(InputError):
    """Evaluation point too close to a pole of the g-function."""


class UnsupportedOrder(InputError):
    """Derivative order outside the supported range."""


class DomainOverflow(InputError):
    """Special-function argument outside the supported range."""


class ContourOrder(InputError):
    """Inner contour radius is not smaller than the outer one."""


class ContourOverlap(InputError):
    """Two integration contours come too close to each other."""


class ContourPoleCollision(InputError):
    """A contour quadrature node sits on top of a pole."""


class EmptyIndexSet(InputError):
    """No population eigenvalue satisfies the extremal-index inequality."""


class DistinctEdgesRequired(InputError):
    """The same edge was supplied twice."""


class ShapeMismatch(InputError):
    """Model dimensions do not match the requested hard-edge exponent."""


class ModeMismatch(InputError):
    """Model is incompatible with the requested experiment mode."""


class OutlierPresent(ModeMismatch):
    """The model produces outliers, so the extreme eigenvalues do not track the edges."""


class EmptySamples(InputError):
    """A statistic was requested on an empty sample."""


class UnknownCommand(InputError):
    """Unrecognized CLI subcommand."""


# numerical errors
class NoConvergence(NumericalError):
    """An iterative solver hit its iteration cap."""


class RootBracketFailure(NumericalError):
    """A root of g' could not be isolated."""


class NonRegularGeometry(NumericalError):
    """A support endpoint has no critical preimage inside the domain of g."""


class QuadratureDivergence(NumericalError):
    """Nystrom error estimate stayed too large at the maximal order."""


class NumericalOverflow(NumericalError):
    """Log-magnitudes exceed the double-precision range."""


class EigensolverFailure(NumericalError):
    """The Hermitian eigensolver returned an inconsistent spectrum."""

"""Exception types shared across the package.

Everything raised on purpose derives from EqflowError so callers (and the
CLI) can distinguish a modelling failure from a plain bug.
"""

from __future__ import annotations


class EqflowError(Exception):
    """Base class for all package-level failures."""


class DegreeMismatch(EqflowError):
    """Polynomial degrees are inconsistent with the declared field degree."""


class InconsistentConfiguration(EqflowError):
    """Endpoint/zero data does not assemble into a valid density polynomial."""


class NonConvergence(EqflowError):
    """An iterative routine ran out of iterations before reaching tolerance."""


class SingularSystem(EqflowError):
    """A linear system arising from gap conditions is numerically singular."""


class NegativeRUnderRoot(EqflowError):
    """The density polynomial is positive inside a gap beyond tolerance."""


class NegativeDensity(EqflowError):
    """The double-zero factor vanishes strictly inside a cut."""


class NewtonDiverged(NonConvergence):
    """Damped Newton failed to reduce the residual."""


class TopologyBroken(EqflowError):
    """Endpoint ordering or pair positivity was violated; the caller must
    change the cut topology before refining again."""


class SeedFailed(EqflowError):
    """No valid small-mass configuration could be constructed."""


class NearSingular(EqflowError):
    """Coordinates are too close to a collision for the flow field to be
    evaluated reliably."""

    def __init__(self, message: str, distance: float = float("nan")):
        super().__init__(message)
        self.distance = distance


class EventResolutionFailed(EqflowError):
    """A phase transition was detected but could not be localized or
    traversed."""


class StepUnderflow(EqflowError):
    """The adaptive integrator step collapsed below the resolvable scale."""


class InsufficientWindow(EqflowError):
    """A scaling-law fit was requested on too narrow a window of states."""


class NoRealConfiguration(EqflowError):
    """No admissible quadruple-root configuration exists for this field."""


class DegenerateField(EqflowError):
    """The field is a degenerate corner case handled only in closed form."""

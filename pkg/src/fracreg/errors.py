"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit-code contract: bad input
(configuration or domain errors, exit code 2) and violated internal
invariants (exit code 3). Everything raised by the library derives from
FracregError so callers can catch one root type.
"""

from __future__ import annotations


class FracregError(Exception):
    """Root of the package exception hierarchy."""


class DomainInputError(FracregError):
    """Invalid configuration or out-of-domain input (CLI exit code 2)."""


class InvariantViolation(FracregError):
    """An internal consistency check failed (CLI exit code 3)."""


# --- bound engine ---

class AlphaOutOfRange(DomainInputError):
    """Dissipation exponent outside the admissible interval."""


class DenominatorNearZero(InvariantViolation):
    """The cubic denominator shared by J and N*zeta came too close to zero."""


class InfeasibleAtGammaZero(InvariantViolation):
    """The margin system fails already at gamma = 0.

    In-range alpha always admits gamma = 0 for small enough zeta, so this
    firing signals a bug rather than bad input.
    """


class NonmonotoneSchedule(DomainInputError):
    """The zeta schedule must be strictly decreasing."""


class ThetaOutOfRange(DomainInputError):
    """Iteration ratio theta must lie in (0, 1/2]."""


# --- extension profile ---

class BvpNoConvergence(InvariantViolation):
    """The profile boundary-value solve did not reach the residual target."""


class GridTooCoarse(DomainInputError):
    """Profile grid below the minimum resolution or truncation range."""


class ProfileRangeExceeded(DomainInputError):
    """Profile queried beyond its truncation radius in strict mode."""


class ZeroField(DomainInputError):
    """The operation is undefined on an identically zero field."""


class QuadratureUnresolved(DomainInputError):
    """The y-grid cannot resolve the smallest active length scale."""


# --- spectral solver ---

class CflViolation(DomainInputError):
    """Advective CFL condition violated for the requested time step."""


class NanDetected(InvariantViolation):
    """Non-finite values appeared in the evolved state."""


class NegativeInput(DomainInputError):
    """Maximal function requires a nonnegative input field."""


class SnapshotFormatError(DomainInputError):
    """Snapshot container failed magic/version/shape validation."""


# --- local quantities ---

class RadiusUnresolved(DomainInputError):
    """Requested radius spans fewer grid cells than the quadrature needs."""


class CylinderOutOfWindow(DomainInputError):
    """Requested space-time cylinder does not fit inside the trajectory."""


class BadTestFunction(DomainInputError):
    """Test function violates nonnegativity, support, or the Neumann condition."""


class DegenerateDenominator(DomainInputError):
    """Ratio denominator vanished while the numerator did not."""


class NonDyadicLambda(DomainInputError):
    """Scaling factor must be a positive integer power of two."""


# --- parabolic dimension ---

class WindowTooNarrow(DomainInputError):
    """Too few dyadic radii inside the requested fit window."""


class EmptyPointSet(DomainInputError):
    """Operation requires at least one point."""


# --- configuration ---

class ConfigError(DomainInputError):
    """Malformed run configuration (unknown key, bad value, missing file)."""

"""Exception hierarchy shared by all relkort modules.

Every failure mode raised by the numerical pipeline derives from
RelkortError so the CLI can map them to a single nonzero exit path.
"""


class RelkortError(Exception):
    """Base class for all relkort errors."""


class ConfigError(RelkortError):
    """Malformed or inconsistent configuration input."""


class DomainError(RelkortError):
    """Evaluation point outside the equation-of-state domain."""


class NoSpinodal(RelkortError):
    """Second derivative of the energy law has no sign change (convex EOS)."""


class MalformedSpinodal(RelkortError):
    """Sign pattern of the second derivative is not (+, -, +)."""


class RangeError(RelkortError):
    """Dual variable not attained on the requested convex branch."""


class PressureOutOfWindow(RelkortError):
    """Pressure outside the window spanned by the spinodal pressures."""


class BracketError(RelkortError):
    """Root bracket truncated by the domain boundary."""


class WindowCollapse(RelkortError):
    """Degenerate pressure window (no equal-pressure construction possible)."""


class NewtonDiverged(RelkortError):
    """Damped Newton iteration failed to reach the residual tolerance."""


class SpinodalCrossing(RelkortError):
    """A Newton iterate left its convex branch."""


class UnexpectedStationaryCount(RelkortError):
    """Stationary-point scan did not find the saddle-center-saddle pattern."""


class NegativeRadicand(RelkortError):
    """Level-set radicand negative in the interior (inconsistent state pair)."""


class OrbitEscaped(RelkortError):
    """Shot trajectory left the bracketing window between the end states."""


class TooFewSamples(RelkortError):
    """Profile has too few samples for finite-difference reconstruction."""


class SliceNotVanDerWaals(RelkortError):
    """Entropy slice of a two-parameter EOS has no valid spinodal."""

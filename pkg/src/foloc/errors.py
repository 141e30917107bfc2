"""Exception hierarchy.

CLI exit codes key off these classes: ``InvalidInputError`` -> 1,
``NumericalError`` (and subclasses) -> 2.
"""


class FolocError(Exception):
    """Base class. ``stage`` is filled in by the experiment pipeline."""

    stage: str | None = None


class InvalidInputError(FolocError, ValueError):
    """Malformed input or config, or a violated precondition."""


class TopologyError(InvalidInputError):
    pass


class NumericalError(FolocError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    """Newton iteration for the synchronous state did not converge."""


class BlowUpError(NumericalError):
    pass


class SynchronyLossError(NumericalError):
    """Nonlinear run left the synchronous basin (phase slip)."""


class DegenerateMotifError(NumericalError):
    """Zero-variance motif passed to the 2D correlation."""


class ResonanceError(NumericalError):
    """Drive frequency sits exactly on an undamped eigenvalue."""

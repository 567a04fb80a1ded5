"""
Exception hierarchy for the optoforce domain.

The CLI maps these onto exit codes: configuration problems are usage
errors, everything deriving from PhysicsError is a physics/convergence
failure.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional


class OptoforceError(Exception):
    """Base class for all errors raised by optoforce."""


class InvalidParameterError(OptoforceError, ValueError):
    """A physical parameter or configuration value violates its invariant."""


class ConfigError(OptoforceError):
    """Configuration could not be parsed or validated.

    Attributes:
        problems: One human-readable entry per failing key, each prefixed by
            the dotted path to that key.
    """

    def __init__(self, message: str, problems: Optional[List[str]] = None) -> None:
        self.problems = list(problems or [])
        detail = "; ".join(self.problems)
        super().__init__(f"{message}: {detail}" if detail else message)


class PhysicsError(OptoforceError):
    """Base class for failures of the simulated physics or its numerics."""


class SnapToContactError(PhysicsError):
    """The force gradient exceeds the mechanical stiffness (ω_m² ≤ 2F₂/m_eff)."""


class BracketError(PhysicsError):
    """A root search has no sign change inside its bracket."""


class DivergenceError(PhysicsError):
    """The integrated state became non-finite."""

    def __init__(self, time: float) -> None:
        self.time = time
        super().__init__(f"non-finite classical state at t = {time:.6e} s")


class AlignmentError(PhysicsError):
    """A projection window does not span an integer number of drive periods."""


class ConvergenceError(PhysicsError):
    """A steady-state or root search did not converge."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class NearSingularError(PhysicsError):
    """The Floquet block matrix is numerically singular."""

    def __init__(self, condition: float, omega: float) -> None:
        self.condition = condition
        self.omega = omega
        super().__init__(f"Floquet matrix near-singular at omega = {omega:.6e} rad/s (condition number {condition:.3e})")


class TruncatedIntegralError(PhysicsError):
    """The variance integrand has not decayed at the edges of its grid."""


class TruncationRangeError(PhysicsError):
    """A Fourier index lies outside the Floquet truncation."""


class NoSetpointError(PhysicsError):
    """The interference fringe is too shallow to define a mid-fringe setpoint."""


class SetpointInvalidError(PhysicsError):
    """The response is not monotonic at the chosen setpoint."""


class ImaginaryResidueError(PhysicsError):
    """An assembled real quantity kept a significant imaginary part."""

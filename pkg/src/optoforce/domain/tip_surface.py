"""
Tip-surface interaction and the scalars derived from it.

The van der Waals sphere-plane potential is expanded to second order in the
mechanical displacement: the first-order term is a static force F1 and the
second-order term a force gradient F2 that softens the mechanical mode.
"""

from __future__ import annotations

import logging
import math

from .errors import BracketError, InvalidParameterError, SnapToContactError
from .models import DerivedQuantities, DeviceSetup, SystemParams, TipSurface

logger = logging.getLogger(__name__)

BISECTION_REL_TOL = 1e-12
BISECTION_MAX_ITER = 200
DEFAULT_BRACKET = (1e-12, 1e-6)


def vdw_force_terms(ts: TipSurface) -> tuple[float, float]:
    """
    Static force and force gradient of the sphere-plane interaction.

    Args:
        ts: Tip-surface geometry

    Returns:
        Tuple (F1, F2) with F1 = −HR/(6h²) [N] and F2 = HR/(6h³) [N/m]

    Raises:
        InvalidParameterError: If h is not positive
    """
    if not ts.h > 0:
        raise InvalidParameterError(f"tip-surface distance must be positive, got {ts.h!r}")
    f1 = -ts.hamaker_radius / (6.0 * ts.h**2)
    f2 = ts.hamaker_radius / (6.0 * ts.h**3)
    return f1, f2


def effective_frequency(sp: SystemParams, F2: float) -> float:
    """
    Mechanical frequency softened by the force gradient, √(ω_m² − 2F2/m_eff).

    Raises:
        SnapToContactError: If the gradient destabilizes the oscillator
    """
    argument = sp.omega_m**2 - 2.0 * F2 / sp.m_eff
    if argument <= 0:
        raise SnapToContactError(
            f"force gradient F2 = {F2:.6e} N/m exceeds m_eff·ω_m²/2 = {sp.m_eff * sp.omega_m**2 / 2:.6e} N/m"
        )
    return math.sqrt(argument)


def frequency_shift(sp: SystemParams, F2: float) -> float:
    """ω_m − ω_eff evaluated without cancellation."""
    omega_eff = effective_frequency(sp, F2)
    return (2.0 * F2 / sp.m_eff) / (sp.omega_m + omega_eff)


def zero_point_fluctuation(sp: SystemParams) -> float:
    """Zero-point spread √(ħ/(2 m_eff ω_m)) of the mechanical mode [m]."""
    return math.sqrt(sp.hbar / (2.0 * sp.m_eff * sp.omega_m))


def shifted_detuning(delta_pump: float, g0: float, beta0: complex) -> float:
    """Pump detuning including the static optomechanical shift, Δ + 2g0·Re β̄₀."""
    return delta_pump + 2.0 * g0 * complex(beta0).real


def compensating_detuning(g0: float, beta0: complex) -> float:
    """Pump detuning Δ that cancels the static shift so that Δ̃ = 0."""
    return -2.0 * g0 * complex(beta0).real


def distance_for_shift(
    sp: SystemParams,
    ts: TipSurface,
    target_shift: float,
    bracket: tuple[float, float] = DEFAULT_BRACKET,
) -> float:
    """
    Tip-surface distance at which the mechanical frequency drops by ``target_shift``.

    The shift decreases monotonically with h, so the root is found by
    bisection (geometric midpoints) on the supplied bracket.

    Args:
        sp: System parameters
        ts: Tip-surface geometry; only its Hamaker product is used
        target_shift: Required ω_m − ω_eff [rad/s]
        bracket: Search interval for h [m]

    Returns:
        Distance h [m]

    Raises:
        InvalidParameterError: If the target is not in (0, ω_m)
        BracketError: If the target is not reached inside the bracket
    """
    if not (0 < target_shift < sp.omega_m):
        raise InvalidParameterError(f"target shift must lie in (0, omega_m), got {target_shift!r}")
    if ts.hamaker_radius == 0:
        raise BracketError("no frequency shift without a tip-surface interaction")

    def excess(h: float) -> float:
        _, f2 = vdw_force_terms(ts.at_distance(h))
        try:
            return frequency_shift(sp, f2) - target_shift
        except SnapToContactError:
            return math.inf

    lo, hi = bracket
    if not (excess(lo) > 0 > excess(hi)):
        raise BracketError(
            f"shift {target_shift:.6e} rad/s not bracketed by h in [{lo:.3e}, {hi:.3e}] m"
        )

    for _ in range(BISECTION_MAX_ITER):
        mid = math.sqrt(lo * hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECTION_REL_TOL * hi:
            break
    h = 0.5 * (lo + hi)
    logger.debug("distance_for_shift: shift %.6e rad/s -> h = %.12e m", target_shift, h)
    return h


def derive_quantities(setup: DeviceSetup, beta0: complex = 0.0, delta_pump: float | None = None) -> DerivedQuantities:
    """
    Evaluate every derived scalar of one operating point.

    Args:
        setup: Physical operating point
        beta0: Static mechanical amplitude entering the shifted detuning
        delta_pump: Pump detuning to use instead of ``setup.drive.delta_pump``

    Returns:
        DerivedQuantities; ω_eff is the pinned value when the setup carries one
    """
    f1, f2 = vdw_force_terms(setup.tip)
    omega_eff = setup.omega_eff if setup.omega_eff is not None else effective_frequency(setup.system, f2)
    delta = setup.drive.delta_pump if delta_pump is None else delta_pump
    return DerivedQuantities(
        x_zpf=zero_point_fluctuation(setup.system),
        F1=f1,
        F2=f2,
        omega_eff=omega_eff,
        delta_tilde=shifted_detuning(delta, setup.system.g0, beta0),
    )

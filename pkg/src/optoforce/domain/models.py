"""
Domain models for the optomechanical force sensor.

All quantities are SI with angular frequencies in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy.constants import hbar as HBAR

from .errors import InvalidParameterError


@dataclass(frozen=True)
class SystemParams:
    """Fixed rates and mass of the optomechanical device."""

    omega_c: float
    omega_m: float
    kappa: float
    gamma: float
    m_eff: float
    g0: float
    hbar: float = HBAR

    def __post_init__(self) -> None:
        for name in ("omega_c", "omega_m", "kappa", "gamma", "m_eff", "hbar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be strictly positive, got {value!r}")
        # g0 = 0 is the decoupled limit
        if not (math.isfinite(self.g0) and self.g0 >= 0):
            raise InvalidParameterError(f"g0 must be non-negative, got {self.g0!r}")

    @property
    def resolved_sideband(self) -> bool:
        """True when the cavity linewidth is below the mechanical frequency."""
        return self.kappa < self.omega_m


@dataclass(frozen=True)
class TipSurface:
    """Van der Waals tip-surface geometry, stored through the H·R_tip product."""

    hamaker_radius: float
    h: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.hamaker_radius) and self.hamaker_radius >= 0):
            raise InvalidParameterError(f"hamaker_radius must be non-negative, got {self.hamaker_radius!r}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise InvalidParameterError(f"tip-surface distance h must be positive, got {self.h!r}")

    @classmethod
    def from_hamaker(cls, hamaker: float, r_tip: float, h: float) -> "TipSurface":
        return cls(hamaker_radius=hamaker * r_tip, h=h)

    def at_distance(self, h: float) -> "TipSurface":
        return replace(self, h=h)


@dataclass(frozen=True)
class DriveConfig:
    """Two optical pumps around the cavity and the coherent mechanical drive.

    Args:
        a_in_minus: Complex amplitude of the pump at ω_p − ω_d [√(photons/s)].
        a_in_plus: Complex amplitude of the pump at ω_p + ω_d [√(photons/s)].
        delta_pump: Detuning Δ of the pump centre ω_p from ω_c [rad/s].
        beta_in_mag: Mechanical drive amplitude |β̄_in| [√(phonons/s)].
        phi_m: Mechanical drive phase [rad].
        omega_d: Mechanical drive frequency, also the pump half-splitting [rad/s].
    """

    a_in_minus: complex
    a_in_plus: complex
    delta_pump: float
    beta_in_mag: float
    phi_m: float
    omega_d: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.omega_d) and self.omega_d > 0):
            raise InvalidParameterError(f"omega_d must be positive, got {self.omega_d!r}")
        if not (math.isfinite(self.beta_in_mag) and self.beta_in_mag >= 0):
            raise InvalidParameterError(f"beta_in_mag must be non-negative, got {self.beta_in_mag!r}")
        if not math.isfinite(self.delta_pump):
            raise InvalidParameterError(f"delta_pump must be finite, got {self.delta_pump!r}")

    @property
    def beta_in(self) -> complex:
        """Complex mechanical drive |β̄_in|·e^{−iφ_m}."""
        return self.beta_in_mag * complex(math.cos(self.phi_m), -math.sin(self.phi_m))

    def is_backaction_evading(self, omega_eff: float, rel_tol: float = 1e-12) -> bool:
        return self.delta_pump == 0.0 and math.isclose(self.omega_d, omega_eff, rel_tol=rel_tol)


@dataclass(frozen=True)
class DerivedQuantities:
    """Scalars derived from the system, the tip and the static displacement."""

    x_zpf: float
    F1: float
    F2: float
    omega_eff: float
    delta_tilde: float = 0.0


@dataclass(frozen=True)
class DeviceSetup:
    """Complete physical operating point of one simulation cell.

    When ``compensate_detuning`` is set the classical solver replaces
    ``drive.delta_pump`` with −2g₀·Re β̄₀ so that the shifted detuning vanishes.
    ``omega_eff`` pins the effective mechanical frequency for sweeps that
    treat it as the independent variable; otherwise it follows from the tip.
    """

    system: SystemParams
    tip: TipSurface
    drive: DriveConfig
    compensate_detuning: bool = field(default=False)
    omega_eff: float | None = None

    def __post_init__(self) -> None:
        if self.omega_eff is not None and not (math.isfinite(self.omega_eff) and self.omega_eff > 0):
            raise InvalidParameterError(f"omega_eff must be positive, got {self.omega_eff!r}")

    def with_drive(self, **changes: object) -> "DeviceSetup":
        return replace(self, drive=replace(self.drive, **changes))

    def with_system(self, **changes: object) -> "DeviceSetup":
        return replace(self, system=replace(self.system, **changes))

    def with_tip(self, **changes: object) -> "DeviceSetup":
        return replace(self, tip=replace(self.tip, **changes))

    def with_omega_eff(self, omega_eff: float | None) -> "DeviceSetup":
        return replace(self, omega_eff=omega_eff)

"""Shared fixtures: the reference device and a small decoupled device for time-domain runs."""

from __future__ import annotations

import math

import pytest

from optoforce.domain.classical import IntegratorConfig
from optoforce.domain.classical_service import ClassicalSolver
from optoforce.domain.harmonic_balance import drive_for_amplitude
from optoforce.domain.models import DeviceSetup, DriveConfig, SystemParams, TipSurface
from optoforce.domain.tip_surface import effective_frequency, vdw_force_terms

TWO_PI = 2.0 * math.pi

PUMP = 1.62e5
PHI_M = 0.86 * math.pi


@pytest.fixture
def reference_system() -> SystemParams:
    return SystemParams(
        omega_c=TWO_PI * 4.5e9,
        omega_m=TWO_PI * 5.37e6,
        kappa=TWO_PI * 1.0e6,
        gamma=TWO_PI * 2.3e3,
        m_eff=5.4e-11,
        g0=TWO_PI * 1.0e3,
    )


@pytest.fixture
def reference_tip() -> TipSurface:
    return TipSurface.from_hamaker(0.071e-18, 5.0e-9, 0.5e-9)


@pytest.fixture
def reference_setup(reference_system: SystemParams, reference_tip: TipSurface) -> DeviceSetup:
    """Resonantly driven sensor with balanced pumps and compensated detuning, |β̄₁| ≈ 100."""
    omega_eff = effective_frequency(reference_system, vdw_force_terms(reference_tip)[1])
    drive = DriveConfig(
        a_in_minus=PUMP,
        a_in_plus=PUMP,
        delta_pump=0.0,
        beta_in_mag=drive_for_amplitude(100.0, omega_eff, omega_eff, reference_system.gamma),
        phi_m=PHI_M,
        omega_d=omega_eff,
    )
    return DeviceSetup(system=reference_system, tip=reference_tip, drive=drive, compensate_detuning=True)


@pytest.fixture
def bae_setup(reference_setup: DeviceSetup) -> DeviceSetup:
    """Backaction-evading configuration: no mechanical drive, so β̄₁ = 0 and ᾱ_c = 0."""
    return reference_setup.with_drive(beta_in_mag=0.0)


@pytest.fixture
def hb_solver() -> ClassicalSolver:
    return ClassicalSolver(IntegratorConfig(method="harmonic-balance"))


@pytest.fixture
def fast_system() -> SystemParams:
    """Broad mechanical line so that RK4 transients last a few tens of drive periods."""
    return SystemParams(
        omega_c=TWO_PI * 1.0e9,
        omega_m=TWO_PI * 1.0e6,
        kappa=TWO_PI * 2.0e5,
        gamma=TWO_PI * 5.0e4,
        m_eff=5.4e-11,
        g0=0.0,
    )


@pytest.fixture
def fast_setup(fast_system: SystemParams) -> DeviceSetup:
    drive = DriveConfig(
        a_in_minus=1.0e3,
        a_in_plus=1.0e3,
        delta_pump=0.0,
        beta_in_mag=1.0e3,
        phi_m=0.3,
        omega_d=fast_system.omega_m,
    )
    return DeviceSetup(system=fast_system, tip=TipSurface(hamaker_radius=0.0, h=1.0e-9), drive=drive)

"""
NoiseService: quadrature-variance sweeps and optical output spectra.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .classical_service import ClassicalSolver
from .errors import InvalidParameterError, OptoforceError
from .floquet import (
    FloquetModel,
    NoiseConfig,
    SpectrumResult,
    optical_spectrum_full,
    optical_spectrum_reduced,
    quadrature_variance,
    spectrum_grid,
)
from .harmonic_balance import drive_for_amplitude
from .harmonics import SteadyState
from .models import DeviceSetup
from .tip_surface import derive_quantities

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariancePoint:
    """
    One point of a variance sweep.

    ``parameter`` is the swept value (detuning ω_eff − ω_d in rad/s, or the
    target |β̄₁|); ``beta1_abs`` is the amplitude actually reached.
    """

    parameter: float
    omega_eff: float
    beta1_abs: float
    linearization: float
    variance: float
    valid: bool = True
    message: str = ""


@dataclass(frozen=True)
class SpectrumPair:
    """Full and reduced optical spectra of one operating point."""

    beta1_target: float
    beta1_abs: float
    full: SpectrumResult
    reduced: SpectrumResult


@dataclass
class NoiseService:
    """
    Runs the fluctuation model on top of classical steady states.

    Points whose 2g₀|β̄₁|/κ reaches ``linearity_threshold`` keep their
    value but carry a warning. The reference drive |β̄₁| = 100 gives about
    0.2, above the default of 0.1.
    """

    solver: ClassicalSolver = field(default_factory=ClassicalSolver)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    linearity_threshold: float = 0.1

    def floquet_model(self, setup: DeviceSetup, state: SteadyState | None = None) -> FloquetModel:
        """Floquet model around the steady state of ``setup``."""
        state = state if state is not None else self.solver.steady_state(setup)
        return FloquetModel.from_steady_state(
            setup.system, state, self.noise.floquet_order, self.noise.condition_limit
        )

    def variance(self, setup: DeviceSetup) -> float:
        return quadrature_variance(self.floquet_model(setup), self.noise)

    def variance_vs_detuning(self, detuning_grid: Sequence[float], base: DeviceSetup) -> List[VariancePoint]:
        """
        ⟨X²⟩ with ω_eff = ω_d + δ for every δ in ``detuning_grid``.

        The steady state is recomputed per point; failing points are returned
        with ``valid=False`` and their diagnostic.
        """
        grid = np.asarray(detuning_grid, dtype=float)
        if grid.size == 0:
            raise InvalidParameterError("detuning grid must be non-empty")
        wd = base.drive.omega_d
        setups = [base.with_omega_eff(wd + float(delta)) for delta in grid]
        logger.info("variance vs detuning: %d points", grid.size)
        return self._sweep(grid, setups)

    def variance_vs_drive(self, beta1_grid: Sequence[float], base: DeviceSetup) -> List[VariancePoint]:
        """
        ⟨X²⟩ at ω_eff = ω_d for mechanical drives aiming at each |β̄₁| in ``beta1_grid``.

        The drive is set through the Lorentzian inverse; the reached |β̄₁| and
        the linearization ratio 2g₀|β̄₁|/κ are reported per point.
        """
        targets = np.asarray(beta1_grid, dtype=float)
        if targets.size == 0:
            raise InvalidParameterError("drive grid must be non-empty")
        if np.any(targets < 0):
            raise InvalidParameterError("target |beta1| values must be non-negative")
        wd, gamma = base.drive.omega_d, base.system.gamma
        resonant = base.with_omega_eff(wd)
        setups = [
            resonant.with_drive(beta_in_mag=drive_for_amplitude(float(t), wd, wd, gamma)) for t in targets
        ]
        logger.info("variance vs drive: %d amplitudes", targets.size)
        return self._sweep(targets, setups)

    def noise_spectra(
        self, beta1_values: Sequence[float], base: DeviceSetup, freq_grid: Sequence[float] | None = None
    ) -> List[SpectrumPair]:
        """Full and reduced optical spectra for each target |β̄₁|, at the operating point of ``base``."""
        dq = derive_quantities(base)
        wd, gamma = base.drive.omega_d, base.system.gamma
        grid = np.asarray(freq_grid, dtype=float) if freq_grid is not None else self.noise.freq_grid
        if grid is None:
            grid = spectrum_grid(wd, dq.omega_eff, gamma)

        pairs = []
        for target in beta1_values:
            setup = base.with_drive(beta_in_mag=drive_for_amplitude(float(target), dq.omega_eff, wd, gamma))
            state = self.solver.steady_state(setup)
            model = self.floquet_model(setup, state)
            self._check_linear(state, setup, f"|beta1| = {target:g}")
            logger.info("noise spectra for |beta1| = %g on %d frequencies", target, len(grid))
            pairs.append(
                SpectrumPair(
                    beta1_target=float(target),
                    beta1_abs=float(abs(state.harmonics.beta_1)),
                    full=optical_spectrum_full(grid, model, self.noise),
                    reduced=optical_spectrum_reduced(grid, model, self.noise),
                )
            )
        return pairs

    def _sweep(self, parameters: np.ndarray, setups: List[DeviceSetup]) -> List[VariancePoint]:
        batch = self.solver.steady_state_batch(setups)
        cells = [batch.cell(i) for i in range(len(setups))]
        workers = max(1, min(self.solver.max_workers, len(setups)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(self._point, parameters, setups, cells))
        invalid = sum(not p.valid for p in points)
        if invalid:
            logger.warning("%d of %d sweep points are invalid", invalid, len(points))
        return points

    def _point(self, parameter: float, setup: DeviceSetup, state: SteadyState) -> VariancePoint:
        beta1 = float(abs(state.harmonics.beta_1))
        ratio = 2.0 * setup.system.g0 * beta1 / setup.system.kappa
        omega_eff = float(state.omega_eff)
        if not state.valid:
            message = "; ".join(state.messages) or "steady state invalid"
            return VariancePoint(float(parameter), omega_eff, beta1, ratio, float("nan"), False, message)
        try:
            variance = quadrature_variance(self.floquet_model(setup, state), self.noise)
        except OptoforceError as exc:
            logger.debug("sweep point %g failed: %s", parameter, exc)
            return VariancePoint(float(parameter), omega_eff, beta1, ratio, float("nan"), False, str(exc))
        message = self._check_linear(state, setup, f"point {parameter:g}")
        return VariancePoint(float(parameter), omega_eff, beta1, ratio, variance, True, message)

    def _check_linear(self, state: SteadyState, setup: DeviceSetup, where: str) -> str:
        ratio = float(state.harmonics.linearization_ratio(setup.system.g0, setup.system.kappa))
        if ratio < self.linearity_threshold:
            return ""
        message = f"linearization ratio 2g0|beta1|/kappa = {ratio:.3f} >= {self.linearity_threshold:g}"
        logger.warning("%s: %s", where, message)
        return message

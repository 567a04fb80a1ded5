"""
ClassicalSolver: steady states and response maps of the classical dynamics.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Sequence

import numpy as np

from .classical import ClassicalProblem, ClassicalState, IntegratorConfig, Rk4Stepper
from .errors import ConvergenceError, InvalidParameterError, OptoforceError, PhysicsError
from .harmonic_balance import solve_harmonic_balance
from .harmonics import HarmonicAccumulator, HarmonicDecomposition, SteadyState
from .models import DeviceSetup
from .tip_surface import derive_quantities, distance_for_shift, frequency_shift, vdw_force_terms

logger = logging.getLogger(__name__)

RESPONSE_AXES = ("omega_eff", "h")

# fewest RK4 cells per thread
MIN_RK4_CHUNK = 64


@dataclass(frozen=True)
class ResponseMap:
    """
    Classical response over (φ_m, sweep axis).

    ``response`` is (|ᾱ_c| − |ᾱ_c,stp|)/|ᾱ_c,max| with the maximum taken over
    the valid cells of the grid; invalid cells hold NaN. Both ω_eff and h are
    reported for every column, NaN where one cannot be expressed by the other.
    """

    phi_grid: np.ndarray
    axis: str
    axis_grid: np.ndarray
    omega_eff: np.ndarray
    h: np.ndarray
    alpha_c_abs: np.ndarray
    response: np.ndarray
    valid: np.ndarray
    setpoint_magnitude: float
    alpha_c_max: float
    messages: List[str] = field(default_factory=list)


@dataclass
class ClassicalSolver:
    """
    Finds classical steady states by integration or harmonic balance.

    Batches are split into ``max_workers`` chunks that run on a thread pool;
    every cell freezes its result at its own convergence window, so results
    do not depend on the chunking. The RK4 stepper advances a whole chunk per
    Python-level step and holds the GIL between numpy calls, so threads pay
    off only for chunks wide enough that the array work dominates; RK4
    batches get at most one thread per ``MIN_RK4_CHUNK`` cells.
    """

    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    max_workers: int = 1

    def steady_state(self, setup: DeviceSetup) -> SteadyState:
        """
        Steady state of a single operating point.

        Raises:
            SnapToContactError, DivergenceError, ConvergenceError: On failure of the cell
        """
        return self._solve([setup], strict=True).cell(0)

    def steady_state_batch(self, setups: Sequence[DeviceSetup]) -> SteadyState:
        """Steady states of many cells sharing ω_d; failing cells are flagged, not raised."""
        setups = list(setups)
        if not setups:
            raise InvalidParameterError("empty batch")
        workers = max(1, min(self.max_workers, len(setups)))
        if self.integrator.method == "rk4":
            workers = max(1, min(workers, len(setups) // MIN_RK4_CHUNK))
        if workers == 1:
            return self._solve(setups, strict=False)

        bounds = np.linspace(0, len(setups), workers + 1).astype(int)
        chunks = [setups[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        logger.debug("steady_state_batch: %d cells on %d threads", len(setups), len(chunks))
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda chunk: self._solve(chunk, strict=False), chunks))
        return _concatenate(parts)

    def _solve(self, setups: List[DeviceSetup], strict: bool) -> SteadyState:
        cfg = self.integrator
        size = len(setups)
        valid = np.ones(size, dtype=bool)
        messages = [""] * size

        prepared: List[DeviceSetup | None] = []
        for i, setup in enumerate(setups):
            try:
                derive_quantities(setup)
                prepared.append(setup)
            except OptoforceError as exc:
                if strict:
                    raise
                valid[i] = False
                messages[i] = str(exc)
                prepared.append(None)
        placeholder = next((s for s in prepared if s is not None), None)
        if placeholder is None:
            return _invalid_batch(setups, messages)
        cells = [s if s is not None else placeholder for s in prepared]
        problem = ClassicalProblem.from_setups(cells)
        compensate = np.array([s.compensate_detuning for s in cells])

        balance = None
        if cfg.method == "harmonic-balance" or cfg.initial == "harmonic-balance" or compensate.any():
            balance = solve_harmonic_balance(problem, compensate, strict=strict)
            for i, message in balance.failures.items():
                valid[i] = False
                messages[i] = messages[i] or message
            problem = replace(problem, delta=np.asarray(balance.delta_pump, dtype=float))

        if cfg.method == "harmonic-balance":
            harmonics, windows = balance.harmonics, 0
        else:
            initial = None
            if cfg.initial == "harmonic-balance":
                h = balance.harmonics
                initial = ClassicalState(
                    alpha=np.asarray(h.alpha_minus + h.alpha_c + h.alpha_plus),
                    beta=np.asarray(h.beta_0 + h.beta_1),
                )
            harmonics, windows = self._integrate(problem, initial, strict, valid, messages)

        delta_tilde = problem.delta + 2.0 * problem.g0 * np.real(harmonics.beta_0)
        self._report(harmonics, problem, valid)
        return SteadyState(
            harmonics=harmonics,
            omega_d=problem.omega_d,
            omega_eff=problem.omega_eff,
            delta_pump=problem.delta,
            delta_tilde=delta_tilde,
            windows=windows,
            valid=valid,
            messages=messages,
        )

    def _integrate(
        self,
        problem: ClassicalProblem,
        initial: ClassicalState | None,
        strict: bool,
        valid: np.ndarray,
        messages: List[str],
    ) -> tuple[HarmonicDecomposition, int]:
        cfg = self.integrator
        stepper = Rk4Stepper(problem, cfg, initial, strict=strict)
        steps_per_window = cfg.window_periods * cfg.steps_per_period
        transient = cfg.transient_periods(float(np.max(problem.gamma)), problem.omega_d) * cfg.steps_per_period
        stepper.advance(transient)

        previous = self._project(stepper, steps_per_window)
        result = previous
        converged = np.zeros(previous.shape, dtype=bool)
        change = np.full(previous.shape, np.inf)
        windows = 1
        while windows < cfg.max_windows:
            current = self._project(stepper, steps_per_window)
            windows += 1
            change = current.relative_change(previous, cfg.abs_floor)
            newly = ~converged & (change < cfg.convergence_tol)
            result = current.where(newly, result)
            converged |= newly
            if windows % 100 == 0:
                logger.debug(
                    "window %d: %d/%d cells converged, worst change %.3e",
                    windows, int(converged.sum()), converged.size, float(np.max(np.where(converged, 0.0, change))),
                )
            if converged.all():
                break
            previous = current

        diverged = ~np.isnan(stepper.diverged_at)
        for i in np.flatnonzero(diverged):
            valid[i] = False
            messages[i] = messages[i] or f"non-finite classical state at t = {stepper.diverged_at[i]:.6e} s"

        unconverged = ~converged & ~diverged
        if unconverged.any():
            worst = float(np.max(change[unconverged]))
            if strict:
                raise ConvergenceError(
                    f"steady state not reached within {cfg.max_windows} windows (worst relative change {worst:.3e})",
                    {"windows": windows, "worst_change": worst, "unconverged": int(unconverged.sum())},
                )
            for i in np.flatnonzero(unconverged):
                valid[i] = False
                messages[i] = messages[i] or f"no convergence within {cfg.max_windows} windows (change {change[i]:.3e})"
            result = current.where(unconverged, result)
        logger.debug("steady state after %d windows", windows)
        return result, windows

    @staticmethod
    def _project(stepper: Rk4Stepper, n_steps: int) -> HarmonicDecomposition:
        accumulator = HarmonicAccumulator(stepper.alpha.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_steps):
                accumulator.add(stepper.alpha, stepper.b, stepper.phase)
                stepper.step()
        return accumulator.result()

    def _report(self, harmonics: HarmonicDecomposition, problem: ClassicalProblem, valid: np.ndarray) -> None:
        cfg = self.integrator
        residual = np.asarray(harmonics.residual)
        noisy = valid & (residual >= cfg.residual_threshold)
        if noisy.any():
            logger.warning(
                "%d cell(s) exceed the ansatz residual threshold %.1e (worst %.3e)",
                int(noisy.sum()), cfg.residual_threshold, float(np.max(residual[noisy])),
            )
        ratio = np.asarray(harmonics.linearization_ratio(problem.g0, problem.kappa))
        nonlinear = valid & (ratio >= cfg.linearity_threshold)
        if nonlinear.any():
            logger.warning(
                "%d cell(s) violate 2g0|beta1|/kappa < %.2f (worst %.3f)",
                int(nonlinear.sum()), cfg.linearity_threshold, float(np.max(ratio[nonlinear])),
            )

    def response_map(
        self,
        phi_grid: Sequence[float],
        axis_grid: Sequence[float],
        base: DeviceSetup,
        setpoint_magnitude: float,
        axis: str = "omega_eff",
    ) -> ResponseMap:
        """
        Steady-state |ᾱ_c| over mechanical drive phase and ω_eff (or h).

        Args:
            phi_grid: Mechanical drive phases [rad]
            axis_grid: ω_eff values [rad/s] or tip-surface distances [m]
            base: Operating point providing every other parameter
            setpoint_magnitude: |ᾱ_c,stp| subtracted from every cell
            axis: "omega_eff" or "h"

        Returns:
            ResponseMap; failing cells are NaN and listed in ``messages``
        """
        if axis not in RESPONSE_AXES:
            raise InvalidParameterError(f"unknown response-map axis {axis!r}, expected one of {RESPONSE_AXES}")
        phis = np.asarray(phi_grid, dtype=float)
        values = np.asarray(axis_grid, dtype=float)
        if phis.size == 0 or values.size == 0:
            raise InvalidParameterError("response map grids must be non-empty")

        omega_eff, h = _axis_conversions(base, values, axis)
        setups = []
        for phi in phis:
            for value in values:
                cell = base.with_drive(phi_m=float(phi))
                if axis == "omega_eff":
                    cell = cell.with_omega_eff(float(value))
                else:
                    cell = cell.with_tip(h=float(value)).with_omega_eff(None)
                setups.append(cell)

        logger.info("response map: %d x %d cells along %s", phis.size, values.size, axis)
        batch = self.steady_state_batch(setups)
        shape = (phis.size, values.size)
        valid = np.asarray(batch.valid).reshape(shape)
        magnitude = np.where(valid, np.abs(np.asarray(batch.harmonics.alpha_c)).reshape(shape), np.nan)
        alpha_c_max = float(np.nanmax(magnitude)) if valid.any() else math.nan
        scale = alpha_c_max if alpha_c_max > 0 else math.nan
        response = (magnitude - setpoint_magnitude) / scale
        messages = [f"cell {i}: {m}" for i, m in enumerate(batch.messages) if m]
        return ResponseMap(
            phi_grid=phis,
            axis=axis,
            axis_grid=values,
            omega_eff=omega_eff,
            h=h,
            alpha_c_abs=magnitude,
            response=response,
            valid=valid,
            setpoint_magnitude=setpoint_magnitude,
            alpha_c_max=alpha_c_max,
            messages=messages,
        )


def _axis_conversions(base: DeviceSetup, values: np.ndarray, axis: str) -> tuple[np.ndarray, np.ndarray]:
    """ω_eff and h for every column of a response map."""
    sp = base.system
    if axis == "h":
        omega_eff = np.full(values.shape, np.nan)
        for k, h in enumerate(values):
            try:
                _, f2 = vdw_force_terms(base.tip.at_distance(float(h)))
                omega_eff[k] = sp.omega_m - frequency_shift(sp, f2)
            except PhysicsError:
                pass
        return omega_eff, values.copy()

    h = np.full(values.shape, np.nan)
    for k, w in enumerate(values):
        try:
            h[k] = distance_for_shift(sp, base.tip, sp.omega_m - float(w))
        except (PhysicsError, InvalidParameterError):
            pass
    return values.copy(), h


def _invalid_batch(setups: Sequence[DeviceSetup], messages: List[str]) -> SteadyState:
    size = len(setups)
    nan = np.full(size, np.nan)
    return SteadyState(
        harmonics=HarmonicDecomposition.zeros((size,)),
        omega_d=setups[0].drive.omega_d,
        omega_eff=nan,
        delta_pump=nan,
        delta_tilde=nan,
        windows=0,
        valid=np.zeros(size, dtype=bool),
        messages=list(messages),
    )


def _concatenate(parts: Sequence[SteadyState]) -> SteadyState:
    def join(name: str) -> np.ndarray:
        return np.concatenate([np.atleast_1d(getattr(p.harmonics, name)) for p in parts])

    harmonics = HarmonicDecomposition(
        alpha_minus=join("alpha_minus"),
        alpha_c=join("alpha_c"),
        alpha_plus=join("alpha_plus"),
        beta_0=join("beta_0"),
        beta_1=join("beta_1"),
        residual=join("residual"),
    )
    return SteadyState(
        harmonics=harmonics,
        omega_d=parts[0].omega_d,
        omega_eff=np.concatenate([np.atleast_1d(p.omega_eff) for p in parts]),
        delta_pump=np.concatenate([np.atleast_1d(p.delta_pump) for p in parts]),
        delta_tilde=np.concatenate([np.atleast_1d(p.delta_tilde) for p in parts]),
        windows=max(p.windows for p in parts),
        valid=np.concatenate([np.atleast_1d(p.valid) for p in parts]),
        messages=[m for p in parts for m in p.messages],
    )

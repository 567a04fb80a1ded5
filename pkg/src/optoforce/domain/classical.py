"""
Classical equations of motion and their fixed-step integration.

The optical amplitude α lives in the frame rotating at the pump centre ω_p,
the mechanical amplitude β in the lab frame. Internally the mechanics is
advanced as b = β·e^{iω_d t}, which leaves only slow rotation at
ω_eff − ω_d in the homogeneous part while the drive terms stay explicit.
Every array field of a ClassicalProblem may carry a batch of sweep cells;
ω_d is shared by the whole batch so one phase table serves all cells.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DivergenceError, InvalidParameterError
from .models import DerivedQuantities, DeviceSetup, DriveConfig, SystemParams
from .tip_surface import derive_quantities

logger = logging.getLogger(__name__)

METHODS = ("rk4", "harmonic-balance")
INITIAL_STATES = ("zero", "harmonic-balance")


@dataclass(frozen=True)
class ClassicalState:
    """Classical amplitudes at time t (arrays when batched)."""

    alpha: complex | np.ndarray
    beta: complex | np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, shape: tuple[int, ...] = (), t: float = 0.0) -> "ClassicalState":
        if shape == ():
            return cls(alpha=0j, beta=0j, t=t)
        return cls(alpha=np.zeros(shape, dtype=complex), beta=np.zeros(shape, dtype=complex), t=t)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled classical time series; axis 0 is time."""

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Fixed-step integration and steady-state detection settings.

    Args:
        dt_periods_per_step: Step size as a fraction of a drive period
        transient_over_gamma: Transient length in units of 1/Γ
        window_periods: Projection window length in drive periods
        convergence_tol: Relative change between consecutive windows that counts as converged
        abs_floor: Absolute floor on coefficient magnitudes in the relative change
        max_windows: Upper bound on projection windows after the transient
        method: "rk4" time integration or direct "harmonic-balance" solve
        initial: "zero" start or a "harmonic-balance" seeded start
        residual_threshold: Largest ansatz residual accepted without a warning
        linearity_threshold: Bound on 2g0|β̄₁|/κ for the linearization flag
    """

    dt_periods_per_step: float = 1.0 / 64.0
    transient_over_gamma: float = 10.0
    window_periods: int = 20
    convergence_tol: float = 1e-8
    abs_floor: float = 1e-9
    max_windows: int = 5000
    method: str = "rk4"
    initial: str = "zero"
    residual_threshold: float = 1e-3
    linearity_threshold: float = 0.1

    def __post_init__(self) -> None:
        if not self.dt_periods_per_step > 0:
            raise InvalidParameterError("dt_periods_per_step must be positive")
        steps = 1.0 / self.dt_periods_per_step
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise InvalidParameterError(
                f"a drive period must hold an integer number of steps, got {steps:.12g} steps per period"
            )
        if round(steps) < 50:
            raise InvalidParameterError(f"at least 50 steps per drive period required, got {round(steps)}")
        if int(self.window_periods) != self.window_periods or self.window_periods < 20:
            raise InvalidParameterError(f"window_periods must be an integer >= 20, got {self.window_periods!r}")
        if self.transient_over_gamma < 0:
            raise InvalidParameterError("transient_over_gamma must be non-negative")
        if self.max_windows < 2:
            raise InvalidParameterError("max_windows must allow at least two windows")
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown integration method {self.method!r}, expected one of {METHODS}")
        if self.initial not in INITIAL_STATES:
            raise InvalidParameterError(f"unknown initial state {self.initial!r}, expected one of {INITIAL_STATES}")

    @property
    def steps_per_period(self) -> int:
        return int(round(1.0 / self.dt_periods_per_step))

    def dt(self, omega_d: float) -> float:
        return 2.0 * math.pi / (self.steps_per_period * omega_d)

    def t_transient(self, gamma: float) -> float:
        return self.transient_over_gamma / gamma

    def t_window(self, omega_d: float) -> float:
        return self.window_periods * 2.0 * math.pi / omega_d

    def transient_periods(self, gamma: float, omega_d: float) -> int:
        """Transient rounded up to whole drive periods so windows start in phase."""
        return int(math.ceil(self.t_transient(gamma) * omega_d / (2.0 * math.pi) - 1e-9))


@dataclass(frozen=True)
class ClassicalProblem:
    """
    Coefficients of the classical equations of motion for one cell or a batch.

    ``static_drive`` is F1·x_zpf/ħ and ``beta_in`` the complex drive
    |β̄_in|·e^{−iφ_m}; every other field carries the symbol it is named after.
    """

    omega_d: float
    kappa: np.ndarray
    gamma: np.ndarray
    g0: np.ndarray
    delta: np.ndarray
    omega_eff: np.ndarray
    static_drive: np.ndarray
    a_minus: np.ndarray
    a_plus: np.ndarray
    beta_in: np.ndarray
    shape: tuple[int, ...] = field(default=())

    @classmethod
    def from_parameters(
        cls, sp: SystemParams, dq: DerivedQuantities, dc: DriveConfig, delta: float | None = None
    ) -> "ClassicalProblem":
        return cls(
            omega_d=dc.omega_d,
            kappa=np.asarray(sp.kappa, dtype=float),
            gamma=np.asarray(sp.gamma, dtype=float),
            g0=np.asarray(sp.g0, dtype=float),
            delta=np.asarray(dc.delta_pump if delta is None else delta, dtype=float),
            omega_eff=np.asarray(dq.omega_eff, dtype=float),
            static_drive=np.asarray(dq.F1 * dq.x_zpf / sp.hbar, dtype=float),
            a_minus=np.asarray(dc.a_in_minus, dtype=complex),
            a_plus=np.asarray(dc.a_in_plus, dtype=complex),
            beta_in=np.asarray(dc.beta_in, dtype=complex),
        )

    @classmethod
    def from_setups(cls, setups: Sequence[DeviceSetup], deltas: Iterable[float] | None = None) -> "ClassicalProblem":
        """
        Stack operating points into one batched problem.

        Raises:
            InvalidParameterError: If the setups do not share one drive frequency
        """
        if not setups:
            raise InvalidParameterError("cannot build a classical problem from an empty batch")
        omega_d = setups[0].drive.omega_d
        if any(s.drive.omega_d != omega_d for s in setups):
            raise InvalidParameterError("all cells of a batch must share the drive frequency omega_d")
        deltas = list(deltas) if deltas is not None else [s.drive.delta_pump for s in setups]
        derived = [derive_quantities(s) for s in setups]
        return cls(
            omega_d=omega_d,
            kappa=np.array([s.system.kappa for s in setups]),
            gamma=np.array([s.system.gamma for s in setups]),
            g0=np.array([s.system.g0 for s in setups]),
            delta=np.asarray(deltas, dtype=float),
            omega_eff=np.array([d.omega_eff for d in derived]),
            static_drive=np.array([d.F1 * d.x_zpf / s.system.hbar for d, s in zip(derived, setups)]),
            a_minus=np.array([s.drive.a_in_minus for s in setups], dtype=complex),
            a_plus=np.array([s.drive.a_in_plus for s in setups], dtype=complex),
            beta_in=np.array([s.drive.beta_in for s in setups], dtype=complex),
            shape=(len(setups),),
        )

    def lab_rhs(self, t: float, alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Time derivatives (dα/dt, dβ/dt) in the α-pump / β-lab frames."""
        phase = np.exp(1j * self.omega_d * t)
        d_alpha = (
            1j * self.delta * alpha
            + 1j * self.g0 * alpha * (beta + np.conj(beta))
            - 0.5 * self.kappa * alpha
            - np.sqrt(self.kappa) * (self.a_minus * phase + self.a_plus * np.conj(phase))
        )
        d_beta = (
            -1j * self.omega_eff * beta
            + 1j * self.g0 * np.abs(alpha) ** 2
            + 1j * self.static_drive
            - 0.5 * self.gamma * beta
            - np.sqrt(self.gamma) * self.beta_in * np.conj(phase)
        )
        return d_alpha, d_beta


def classical_rhs(state: ClassicalState, sp: SystemParams, dq: DerivedQuantities, dc: DriveConfig) -> ClassicalState:
    """
    Right-hand side of the classical optomechanical equations of motion.

    Args:
        state: Current amplitudes and time
        sp: System parameters
        dq: Derived quantities (ω_eff, F1, x_zpf)
        dc: Pumps, detuning and mechanical drive

    Returns:
        ClassicalState holding (dα/dt, dβ/dt) at ``state.t``
    """
    problem = ClassicalProblem.from_parameters(sp, dq, dc)
    d_alpha, d_beta = problem.lab_rhs(state.t, np.asarray(state.alpha), np.asarray(state.beta))
    if np.ndim(d_alpha) == 0:
        return ClassicalState(alpha=complex(d_alpha), beta=complex(d_beta), t=state.t)
    return ClassicalState(alpha=d_alpha, beta=d_beta, t=state.t)


class Rk4Stepper:
    """
    Classical RK4 on (α, b = β·e^{iω_d t}) with per-period phase tables.

    ``strict`` raises DivergenceError on the first non-finite value; otherwise
    offending cells are zeroed and recorded in ``diverged_at``.
    """

    def __init__(
        self,
        problem: ClassicalProblem,
        cfg: IntegratorConfig,
        initial: ClassicalState | None = None,
        strict: bool = True,
    ) -> None:
        self.problem = problem
        self.strict = strict
        self.steps_per_period = cfg.steps_per_period
        self.dt = cfg.dt(problem.omega_d)
        shape = np.broadcast_shapes(
            problem.delta.shape, problem.omega_eff.shape, problem.a_minus.shape, problem.beta_in.shape, problem.shape
        )
        initial = initial or ClassicalState.zeros(shape)
        self.t0 = initial.t
        self.step_index = 0

        offset = np.exp(1j * problem.omega_d * initial.t)
        half_steps = np.arange(2 * self.steps_per_period)
        self._phase = offset * np.exp(0.5j * problem.omega_d * self.dt * half_steps)
        self._phase_conj = np.conj(self._phase)
        sqrt_kappa = np.asarray(np.sqrt(problem.kappa))
        self._pump = -sqrt_kappa[..., None] * (
            problem.a_minus[..., None] * self._phase + problem.a_plus[..., None] * self._phase_conj
        )
        self._pump = np.moveaxis(self._pump, -1, 0)
        self._cavity_rate = 1j * problem.delta - 0.5 * problem.kappa
        self._mech_rate = -1j * (problem.omega_eff - problem.omega_d) - 0.5 * problem.gamma
        self._mech_drive = np.sqrt(problem.gamma) * problem.beta_in
        self._g0 = problem.g0
        self._static = problem.static_drive

        self.alpha = np.array(np.broadcast_to(initial.alpha, shape), dtype=complex)
        self.b = np.array(np.broadcast_to(initial.beta, shape), dtype=complex) * offset
        self.diverged_at = np.full(shape, np.nan)

    @property
    def t(self) -> float:
        return self.t0 + self.step_index * self.dt

    @property
    def phase(self) -> complex:
        """e^{iω_d t} at the current step."""
        return self._phase[2 * (self.step_index % self.steps_per_period)]

    @property
    def state(self) -> ClassicalState:
        return ClassicalState(alpha=self.alpha.copy(), beta=self.b * np.conj(self.phase), t=self.t)

    def _rhs(self, alpha: np.ndarray, b: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
        phase = self._phase[j]
        beta = b * self._phase_conj[j]
        d_alpha = (self._cavity_rate + 2j * self._g0 * beta.real) * alpha + self._pump[j]
        photons = alpha.real**2 + alpha.imag**2
        d_b = self._mech_rate * b + 1j * (self._g0 * photons + self._static) * phase - self._mech_drive
        return d_alpha, d_b

    def step(self) -> None:
        dt = self.dt
        j = 2 * (self.step_index % self.steps_per_period)
        j_end = (j + 2) % (2 * self.steps_per_period)
        a, b = self.alpha, self.b
        ka1, kb1 = self._rhs(a, b, j)
        ka2, kb2 = self._rhs(a + 0.5 * dt * ka1, b + 0.5 * dt * kb1, j + 1)
        ka3, kb3 = self._rhs(a + 0.5 * dt * ka2, b + 0.5 * dt * kb2, j + 1)
        ka4, kb4 = self._rhs(a + dt * ka3, b + dt * kb3, j_end)
        self.alpha = a + (dt / 6.0) * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        self.b = b + (dt / 6.0) * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4)
        self.step_index += 1
        self._check_finite()

    def _check_finite(self) -> None:
        finite = np.isfinite(self.alpha) & np.isfinite(self.b)
        if finite.all():
            return
        if self.strict:
            raise DivergenceError(self.t)
        bad = ~finite
        self.diverged_at = np.where(bad & np.isnan(self.diverged_at), self.t, self.diverged_at)
        self.alpha = np.where(bad, 0j, self.alpha)
        self.b = np.where(bad, 0j, self.b)

    def advance(self, n_steps: int) -> None:
        """Integrate ``n_steps`` steps without recording."""
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_steps):
                self.step()

    def record(self, n_steps: int) -> Trajectory:
        """Integrate ``n_steps`` steps, returning the samples at the start of each step."""
        shape = self.alpha.shape
        times = np.empty(n_steps)
        alphas = np.empty((n_steps, *shape), dtype=complex)
        betas = np.empty((n_steps, *shape), dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(n_steps):
                times[k] = self.t
                alphas[k] = self.alpha
                betas[k] = self.b * np.conj(self.phase)
                self.step()
        return Trajectory(t=times, alpha=alphas, beta=betas)


def integrate(
    initial: ClassicalState,
    cfg: IntegratorConfig,
    problem: ClassicalProblem,
    windows: int = 1,
) -> Trajectory:
    """
    Fixed-step RK4 trajectory over the transient plus ``windows`` projection windows.

    Args:
        initial: Starting amplitudes; its time sets the phase of the drives
        cfg: Integrator settings
        problem: Equation coefficients (single cell or batch)
        windows: Number of projection windows after the transient

    Returns:
        Trajectory sampled every step, transient included

    Raises:
        DivergenceError: If the state becomes non-finite
    """
    stepper = Rk4Stepper(problem, cfg, initial, strict=True)
    periods = cfg.transient_periods(float(np.max(problem.gamma)), problem.omega_d) + windows * cfg.window_periods
    logger.debug("integrate: %d drive periods at %d steps per period", periods, cfg.steps_per_period)
    return stepper.record(periods * cfg.steps_per_period)

"""
Harmonic decomposition of the classical steady state.

The optical amplitude is projected onto e^{+iω_d t}, 1 and e^{−iω_d t}
(components ᾱ₋, ᾱ_c, ᾱ₊) and the mechanical amplitude onto 1 and
e^{−iω_d t} (β̄₀, β̄₁). Uniform samples over an integer number of periods
make the discrete mean an exact projection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import List

import numpy as np

from .classical import Trajectory
from .errors import AlignmentError

logger = logging.getLogger(__name__)

COEFFICIENTS = ("alpha_minus", "alpha_c", "alpha_plus", "beta_0", "beta_1")


@dataclass(frozen=True)
class HarmonicDecomposition:
    """Fourier coefficients of the classical steady state (arrays when batched)."""

    alpha_minus: complex | np.ndarray
    alpha_c: complex | np.ndarray
    alpha_plus: complex | np.ndarray
    beta_0: complex | np.ndarray
    beta_1: complex | np.ndarray
    residual: float | np.ndarray = 0.0

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.alpha_c)

    def linearization_ratio(self, g0: float, kappa: float) -> float | np.ndarray:
        """2g0|β̄₁|/κ, small when the linearized fluctuation model holds."""
        return 2.0 * g0 * np.abs(self.beta_1) / kappa

    def alpha_at(self, t: np.ndarray | float, omega_d: float) -> np.ndarray:
        phase = np.exp(1j * omega_d * np.asarray(t))
        return self.alpha_minus * phase + self.alpha_c + self.alpha_plus * np.conj(phase)

    def beta_at(self, t: np.ndarray | float, omega_d: float) -> np.ndarray:
        return self.beta_0 + self.beta_1 * np.exp(-1j * omega_d * np.asarray(t))

    def relative_change(self, previous: "HarmonicDecomposition", floor: float) -> np.ndarray:
        """Largest relative coefficient change against ``previous``, with an absolute floor."""
        worst = np.zeros(self.shape)
        for name in COEFFICIENTS:
            now = np.asarray(getattr(self, name))
            before = np.asarray(getattr(previous, name))
            scale = np.maximum(np.abs(now), floor)
            worst = np.maximum(worst, np.abs(now - before) / scale)
        return worst

    def where(self, mask: np.ndarray, other: "HarmonicDecomposition") -> "HarmonicDecomposition":
        """Cell-wise merge: ``self`` where ``mask`` holds, ``other`` elsewhere."""
        merged = {
            f.name: np.where(mask, getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        }
        return HarmonicDecomposition(**merged)

    def cell(self, index: int | tuple[int, ...]) -> "HarmonicDecomposition":
        values = {f.name: np.asarray(getattr(self, f.name))[index] for f in fields(self)}
        return HarmonicDecomposition(
            **{k: (complex(v) if k in COEFFICIENTS else float(v)) for k, v in values.items()}
        )

    @classmethod
    def zeros(cls, shape: tuple[int, ...] = ()) -> "HarmonicDecomposition":
        zero = np.zeros(shape, dtype=complex)
        return cls(zero, zero, zero, zero, zero, np.zeros(shape))


@dataclass(frozen=True)
class SteadyState:
    """
    Converged classical operating point of one cell or a batch.

    ``delta_pump`` is the detuning actually integrated (after any
    compensation) and ``delta_tilde`` the shifted detuning seen by the
    fluctuations. ``valid`` is False for cells that diverged, failed to
    converge or could not be set up. For batches ``messages`` holds one entry
    per cell, empty when the cell is fine.
    """

    harmonics: HarmonicDecomposition
    omega_d: float
    omega_eff: float | np.ndarray
    delta_pump: float | np.ndarray
    delta_tilde: float | np.ndarray
    windows: int = 0
    valid: bool | np.ndarray = True
    messages: List[str] = field(default_factory=list)

    def cell(self, index: int) -> "SteadyState":
        valid = bool(np.asarray(self.valid)[index])
        return SteadyState(
            harmonics=self.harmonics.cell(index),
            omega_d=self.omega_d,
            omega_eff=float(np.asarray(self.omega_eff)[index]),
            delta_pump=float(np.asarray(self.delta_pump)[index]),
            delta_tilde=float(np.asarray(self.delta_tilde)[index]),
            windows=self.windows,
            valid=valid,
            messages=[self.messages[index]] if index < len(self.messages) and self.messages[index] else [],
        )

    def with_harmonics(self, harmonics: HarmonicDecomposition) -> "SteadyState":
        return replace(self, harmonics=harmonics)


class HarmonicAccumulator:
    """Streaming projection of a window sampled once per integration step."""

    def __init__(self, shape: tuple[int, ...]) -> None:
        self.count = 0
        self._sums = {name: np.zeros(shape, dtype=complex) for name in COEFFICIENTS}
        self._alpha_power = np.zeros(shape)
        self._beta_power = np.zeros(shape)

    def add(self, alpha: np.ndarray, b: np.ndarray, phase: complex) -> None:
        """Add one sample; ``b`` is β·e^{iω_d t} and ``phase`` is e^{iω_d t}."""
        phase_conj = phase.conjugate()
        self._sums["alpha_minus"] += alpha * phase_conj
        self._sums["alpha_c"] += alpha
        self._sums["alpha_plus"] += alpha * phase
        self._sums["beta_0"] += b * phase_conj
        self._sums["beta_1"] += b
        self._alpha_power += alpha.real**2 + alpha.imag**2
        self._beta_power += b.real**2 + b.imag**2
        self.count += 1

    def result(self) -> HarmonicDecomposition:
        n = self.count
        coeffs = {name: total / n for name, total in self._sums.items()}
        alpha_power = self._alpha_power / n
        beta_power = self._beta_power / n
        alpha_kept = sum(np.abs(coeffs[k]) ** 2 for k in ("alpha_minus", "alpha_c", "alpha_plus"))
        beta_kept = np.abs(coeffs["beta_0"]) ** 2 + np.abs(coeffs["beta_1"]) ** 2
        residual = np.maximum(
            _ratio(np.maximum(alpha_power - alpha_kept, 0.0), alpha_power),
            _ratio(np.maximum(beta_power - beta_kept, 0.0), beta_power),
        )
        return HarmonicDecomposition(residual=residual, **coeffs)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.asarray(denominator, dtype=float)
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, numerator / safe, 0.0)


def extract_harmonics(traj: Trajectory, omega_d: float, window: tuple[float, float]) -> HarmonicDecomposition:
    """
    Project a sampled trajectory onto the steady-state ansatz.

    Args:
        traj: Uniformly sampled trajectory
        omega_d: Drive frequency [rad/s]
        window: (t_start, t_end) of the projection window [s]

    Returns:
        HarmonicDecomposition with the relative power outside the ansatz as residual

    Raises:
        AlignmentError: If the window is not an integer number of drive periods,
            or the sampling does not divide the drive period evenly
    """
    t_start, t_end = window
    period = 2.0 * math.pi / omega_d
    periods = (t_end - t_start) / period
    if round(periods) < 1 or abs(periods - round(periods)) > 1e-6:
        raise AlignmentError(f"window of {periods:.9f} drive periods is not an integer number of periods")
    if len(traj.t) < 2:
        raise AlignmentError("trajectory holds fewer than two samples")
    dt = float(traj.t[1] - traj.t[0])
    if not np.allclose(np.diff(traj.t), dt, rtol=1e-9, atol=0.0):
        raise AlignmentError("trajectory is not uniformly sampled")
    samples_per_period = period / dt
    if abs(samples_per_period - round(samples_per_period)) > 1e-6 or round(samples_per_period) < 3:
        raise AlignmentError(f"{samples_per_period:.9f} samples per drive period is not a usable integer")

    eps = 1e-6 * dt
    mask = (traj.t >= t_start - eps) & (traj.t < t_end - eps)
    expected = int(round(periods)) * int(round(samples_per_period))
    if int(mask.sum()) != expected:
        raise AlignmentError(f"window covers {int(mask.sum())} samples, expected {expected}")

    t = traj.t[mask]
    alpha = traj.alpha[mask]
    beta = traj.beta[mask]
    phase = np.exp(1j * omega_d * t).reshape((-1,) + (1,) * (alpha.ndim - 1))

    alpha_minus = np.mean(alpha * np.conj(phase), axis=0)
    alpha_c = np.mean(alpha, axis=0)
    alpha_plus = np.mean(alpha * phase, axis=0)
    beta_0 = np.mean(beta, axis=0)
    beta_1 = np.mean(beta * phase, axis=0)

    alpha_fit = alpha_minus * phase + alpha_c + alpha_plus * np.conj(phase)
    beta_fit = beta_0 + beta_1 * np.conj(phase)
    residual = np.maximum(
        _ratio(np.mean(np.abs(alpha - alpha_fit) ** 2, axis=0), np.mean(np.abs(alpha) ** 2, axis=0)),
        _ratio(np.mean(np.abs(beta - beta_fit) ** 2, axis=0), np.mean(np.abs(beta) ** 2, axis=0)),
    )
    result = HarmonicDecomposition(alpha_minus, alpha_c, alpha_plus, beta_0, beta_1, residual)
    if result.shape == ():
        return result.cell(())
    return result

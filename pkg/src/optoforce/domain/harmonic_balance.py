"""
Frequency-domain steady state of the classical equations.

Substituting the five-coefficient ansatz into the equations of motion and
balancing each frequency component gives ten real equations, solved per
cell with Powell's hybrid method. The linear estimates below seed the
solver and double as closed-form oracles in the decoupled limit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.optimize import root

from .classical import ClassicalProblem
from .errors import ConvergenceError
from .harmonics import COEFFICIENTS, HarmonicDecomposition
from .tip_surface import compensating_detuning

logger = logging.getLogger(__name__)

HB_XTOL = 1e-12
HB_ACCEPT = 1e-10


def drive_for_amplitude(target_beta1: float, omega_eff: float, omega_d: float, gamma: float) -> float:
    """Mechanical drive |β̄_in| whose Lorentzian response has magnitude ``target_beta1``."""
    return target_beta1 * abs(1j * (omega_eff - omega_d) + 0.5 * gamma) / math.sqrt(gamma)


def measurement_rate(g0: float, alpha: complex, kappa: float) -> float:
    """Measurement rate 4g0²|ᾱ|²/κ contributed by one pump sideband."""
    return 4.0 * g0**2 * abs(alpha) ** 2 / kappa


def linear_estimates(problem: ClassicalProblem, delta_tilde: np.ndarray | float) -> HarmonicDecomposition:
    """
    First-order estimates of the steady-state coefficients.

    Pump sidebands follow the bare cavity response, β̄₁ the mechanical
    Lorentzian, ᾱ_c the mixing of the two and β̄₀ the static displacement
    from F1 plus radiation pressure.
    """
    kappa, gamma, g0 = problem.kappa, problem.gamma, problem.g0
    wd = problem.omega_d
    cavity = 0.5 * kappa - 1j * delta_tilde
    alpha_minus = -np.sqrt(kappa) * problem.a_minus / (cavity + 1j * wd)
    alpha_plus = -np.sqrt(kappa) * problem.a_plus / (cavity - 1j * wd)
    beta_1 = -np.sqrt(gamma) * problem.beta_in / (1j * (problem.omega_eff - wd) + 0.5 * gamma)
    alpha_c = 1j * g0 * (alpha_minus * beta_1 + alpha_plus * np.conj(beta_1)) / cavity
    photons = np.abs(alpha_minus) ** 2 + np.abs(alpha_c) ** 2 + np.abs(alpha_plus) ** 2
    beta_0 = (problem.static_drive + g0 * photons) / (problem.omega_eff - 0.5j * gamma)
    return HarmonicDecomposition(alpha_minus, alpha_c, alpha_plus, beta_0, beta_1, np.zeros(np.shape(alpha_c)))


def truncation_residual(
    h: HarmonicDecomposition, g0: float, kappa: float, gamma: float, omega_eff: float, omega_d: float,
    delta_tilde: float,
) -> float:
    """Relative power of the leading mixing products the ansatz leaves out."""
    cavity = 0.5 * kappa - 1j * delta_tilde
    alpha_p2 = 1j * g0 * np.conj(h.beta_1) * h.alpha_minus / (cavity + 2j * omega_d)
    alpha_m2 = 1j * g0 * h.beta_1 * h.alpha_plus / (cavity - 2j * omega_d)
    alpha_kept = abs(h.alpha_minus) ** 2 + abs(h.alpha_c) ** 2 + abs(h.alpha_plus) ** 2

    # radiation-pressure components at e^{+iω_d t} and e^{∓2iω_d t}
    products = {
        -1: h.alpha_minus * np.conj(h.alpha_c) + h.alpha_c * np.conj(h.alpha_plus),
        2: h.alpha_plus * np.conj(h.alpha_minus),
        -2: h.alpha_minus * np.conj(h.alpha_plus),
    }
    beta_lost = sum(
        abs(1j * g0 * p / (1j * (omega_eff - q * omega_d) + 0.5 * gamma)) ** 2 for q, p in products.items()
    )
    beta_kept = abs(h.beta_0) ** 2 + abs(h.beta_1) ** 2
    alpha_ratio = (abs(alpha_p2) ** 2 + abs(alpha_m2) ** 2) / alpha_kept if alpha_kept > 0 else 0.0
    beta_ratio = beta_lost / beta_kept if beta_kept > 0 else 0.0
    return float(max(alpha_ratio, beta_ratio))


def _solve_cell(
    kappa: float, gamma: float, g0: float, delta: float, omega_eff: float, static: float,
    a_minus: complex, a_plus: complex, beta_in: complex, omega_d: float, compensate: bool,
    seed: np.ndarray,
) -> tuple[np.ndarray, float]:
    sqrt_kappa, sqrt_gamma = math.sqrt(kappa), math.sqrt(gamma)

    def shifted(beta_0: complex) -> float:
        return 0.0 if compensate else delta + 2.0 * g0 * beta_0.real

    def equations(x: np.ndarray) -> np.ndarray:
        am, ac, ap, b0, b1 = x[:5] + 1j * x[5:]
        dt = shifted(b0)
        e_minus = (1j * dt - 0.5 * kappa - 1j * omega_d) * am + 1j * g0 * np.conj(b1) * ac - sqrt_kappa * a_minus
        e_centre = (1j * dt - 0.5 * kappa) * ac + 1j * g0 * (b1 * am + np.conj(b1) * ap)
        e_plus = (1j * dt - 0.5 * kappa + 1j * omega_d) * ap + 1j * g0 * b1 * ac - sqrt_kappa * a_plus
        photons = abs(am) ** 2 + abs(ac) ** 2 + abs(ap) ** 2
        e_static = -1j * omega_eff * b0 + 1j * (g0 * photons + static) - 0.5 * gamma * b0
        e_drive = (
            -1j * (omega_eff - omega_d) * b1 - 0.5 * gamma * b1
            + 1j * g0 * (ac * np.conj(am) + ap * np.conj(ac))
            - sqrt_gamma * beta_in
        )
        residual = np.array(
            [e_minus / kappa, e_centre / kappa, e_plus / kappa, e_static / omega_eff, e_drive / gamma]
        )
        return np.concatenate([residual.real, residual.imag])

    x0 = np.concatenate([seed.real, seed.imag])
    solution = root(equations, x0, method="hybr", options={"xtol": HB_XTOL})
    # hybr may stop short of xtol once the residual sits at rounding level
    accepted = np.max(np.abs(solution.fun)) <= HB_ACCEPT * max(1.0, float(np.max(np.abs(solution.x))))
    if not (solution.success or accepted):
        raise ConvergenceError(
            f"harmonic balance did not converge: {solution.message}",
            {"nfev": int(solution.nfev), "residual_norm": float(np.linalg.norm(solution.fun))},
        )
    z = solution.x[:5] + 1j * solution.x[5:]
    return z, shifted(z[3])


@dataclass(frozen=True)
class BalanceSolution:
    """Harmonic-balance result; ``failures`` maps flat cell indices to error messages."""

    harmonics: HarmonicDecomposition
    delta_pump: np.ndarray
    delta_tilde: np.ndarray
    failures: Dict[int, str] = field(default_factory=dict)


def solve_harmonic_balance(
    problem: ClassicalProblem, compensate: bool | np.ndarray = False, strict: bool = True
) -> BalanceSolution:
    """
    Harmonic-balance steady state of every cell in ``problem``.

    Args:
        problem: Equation coefficients, single cell or batch
        compensate: Per cell, solve with Δ̃ = 0 and report the compensating Δ
        strict: Raise on the first failing cell instead of recording it

    Returns:
        BalanceSolution; ``delta_pump`` is the detuning consistent with the
        solution, which differs from ``problem.delta`` only for compensated
        cells. Failed cells carry their linear estimates.

    Raises:
        ConvergenceError: If the root search fails and ``strict`` is set
    """
    shape = np.broadcast_shapes(
        problem.delta.shape, problem.omega_eff.shape, problem.beta_in.shape, problem.a_minus.shape, problem.shape
    )
    arrays = {
        name: np.broadcast_to(np.asarray(getattr(problem, name)), shape).ravel()
        for name in ("kappa", "gamma", "g0", "delta", "omega_eff", "static_drive", "a_minus", "a_plus", "beta_in")
    }
    compensate_flags = np.broadcast_to(np.asarray(compensate, dtype=bool), shape).ravel()
    size = int(np.prod(shape, dtype=int))
    coefficients = np.empty((size, 5), dtype=complex)
    delta_pump = np.empty(size)
    delta_tilde = np.empty(size)
    residual = np.empty(size)
    failures: Dict[int, str] = {}

    for i in range(size):
        cell = {name: values[i] for name, values in arrays.items()}
        kappa, gamma, g0 = float(cell["kappa"]), float(cell["gamma"]), float(cell["g0"])
        delta, omega_eff = float(cell["delta"]), float(cell["omega_eff"])
        cell_problem = ClassicalProblem(
            omega_d=problem.omega_d, **{name: np.asarray(value) for name, value in cell.items()}
        )
        seed_tilde = 0.0 if compensate_flags[i] else delta
        seed = linear_estimates(cell_problem, seed_tilde)
        if not compensate_flags[i]:
            seed_tilde = delta + 2.0 * g0 * complex(seed.beta_0).real
            seed = linear_estimates(cell_problem, seed_tilde)
        seed_vector = np.array([complex(getattr(seed, name)) for name in COEFFICIENTS])

        try:
            z, tilde = _solve_cell(
                kappa, gamma, g0, delta, omega_eff, float(cell["static_drive"]), complex(cell["a_minus"]),
                complex(cell["a_plus"]), complex(cell["beta_in"]), problem.omega_d, bool(compensate_flags[i]),
                seed_vector,
            )
        except ConvergenceError as exc:
            if strict:
                raise
            failures[i] = str(exc)
            z, tilde = seed_vector, seed_tilde

        coefficients[i] = z
        delta_tilde[i] = tilde
        delta_pump[i] = compensating_detuning(g0, z[3]) if compensate_flags[i] else delta
        residual[i] = truncation_residual(
            HarmonicDecomposition(*z), g0, kappa, gamma, omega_eff, problem.omega_d, tilde
        )

    logger.debug("harmonic balance solved %d cell(s), %d failure(s)", size, len(failures))
    harmonics = HarmonicDecomposition(
        *[coefficients[:, k].reshape(shape) for k in range(5)], residual=residual.reshape(shape)
    )
    if shape == ():
        return BalanceSolution(harmonics.cell(()), delta_pump[0], delta_tilde[0], failures)
    return BalanceSolution(harmonics, delta_pump.reshape(shape), delta_tilde.reshape(shape), failures)

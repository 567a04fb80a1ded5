"""
Linearized fluctuations as a truncated Floquet linear system.

Operators are collected per Fourier index n ∈ [−N, N] into the vector
x = (d, c, d†, c†). Block n of the system matrix carries
−i(ω − nω_d)·I + A⁽⁰⁾ on its diagonal and couples to blocks n ± 1 through
the pump sidebands and β̄₁. Noise enters only the n = 0 block.

Spectra are assembled from transfer matrices T(ω) = M(ω)⁻¹B evaluated on
whole frequency grids at once, with delta-correlated white inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    ImaginaryResidueError,
    InvalidParameterError,
    NearSingularError,
    TruncatedIntegralError,
    TruncationRangeError,
)
from .harmonics import HarmonicDecomposition, SteadyState
from .models import SystemParams

logger = logging.getLogger(__name__)

QUADRATURE_REFERENCES = ("bae", "lab")

# weights over (d, c, d†, c†); x is the position c + c† in units of x_zpf
OPERATORS: Dict[str, Tuple[float, float, float, float]] = {
    "d": (1.0, 0.0, 0.0, 0.0),
    "c": (0.0, 1.0, 0.0, 0.0),
    "d_dag": (0.0, 0.0, 1.0, 0.0),
    "c_dag": (0.0, 0.0, 0.0, 1.0),
    "x": (0.0, 1.0, 0.0, 1.0),
}

CHUNK_SIZE = 4096
SINH_STEP = 0.05


@dataclass(frozen=True)
class NoiseConfig:
    """
    Bath occupancies and numerical settings of the fluctuation model.

    Args:
        n_th_cavity: Thermal photon occupancy of the optical bath
        n_th_mech: Thermal phonon occupancy of the mechanical bath
        floquet_order: Truncation N of the Fourier index
        freq_grid: Measurement frequencies relative to ω_p [rad/s]
        theta: Quadrature phase [rad]
        quadrature_reference: "bae" measures θ from the backaction-evading
            quadrature, "lab" uses θ as given
        condition_limit: Largest accepted condition number of M(ω)
        edge_decay: Largest accepted integrand at the grid edge, relative to its peak
        imag_tolerance: Relative imaginary residue above which a warning is logged
        imag_limit: Relative imaginary residue above which the variance is rejected
    """

    n_th_cavity: float = 0.0
    n_th_mech: float = 0.0
    floquet_order: int = 1
    freq_grid: Optional[np.ndarray] = field(default=None, compare=False)
    theta: float = 0.0
    quadrature_reference: str = "bae"
    condition_limit: float = 1e12
    edge_decay: float = 1e-6
    imag_tolerance: float = 1e-8
    imag_limit: float = 1e-4

    def __post_init__(self) -> None:
        for name in ("n_th_cavity", "n_th_mech"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidParameterError(f"{name} must be non-negative, got {value!r}")
        if int(self.floquet_order) != self.floquet_order or self.floquet_order < 1:
            raise InvalidParameterError(f"floquet_order must be an integer >= 1, got {self.floquet_order!r}")
        if self.quadrature_reference not in QUADRATURE_REFERENCES:
            raise InvalidParameterError(
                f"quadrature_reference must be one of {QUADRATURE_REFERENCES}, got {self.quadrature_reference!r}"
            )
        if self.freq_grid is not None:
            grid = np.asarray(self.freq_grid, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or not np.all(np.diff(grid) > 0):
                raise InvalidParameterError("freq_grid must be a strictly increasing list of at least two values")
        for name in ("condition_limit", "edge_decay", "imag_tolerance", "imag_limit"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")

    def correlator(self) -> np.ndarray:
        """Input correlator between the channels (d_in, c_in, d_in†, c_in†)."""
        c = np.zeros((4, 4))
        c[0, 2] = self.n_th_cavity + 1.0
        c[2, 0] = self.n_th_cavity
        c[1, 3] = self.n_th_mech + 1.0
        c[3, 1] = self.n_th_mech
        return c


@dataclass(frozen=True)
class FloquetSystem:
    """Block matrix M(ω) with its input map; block ``order`` is Fourier index 0."""

    omega: float
    order: int
    matrix: np.ndarray
    input_map: np.ndarray
    ordering: Tuple[str, ...] = ("d", "c", "d_dag", "c_dag")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectrumResult:
    """A real spectral density on ``freq_grid``; ``variance`` is set for integrated quantities."""

    freq_grid: np.ndarray
    values: np.ndarray
    label: str
    variance: Optional[float] = None
    imag_residue: float = 0.0


@dataclass(frozen=True)
class FloquetModel:
    """
    Coefficients of the linearized fluctuation dynamics around one steady state.
    """

    kappa: float
    gamma: float
    g0: float
    omega_eff: float
    omega_d: float
    delta_tilde: float
    harmonics: HarmonicDecomposition
    order: int = 1
    condition_limit: float = 1e12

    def __post_init__(self) -> None:
        if self.order < 1:
            raise InvalidParameterError(f"Floquet order must be >= 1, got {self.order}")
        if not (self.kappa > 0 and self.gamma > 0):
            raise InvalidParameterError("kappa and gamma must be positive for a non-degenerate input map")

    @classmethod
    def from_steady_state(
        cls, system: SystemParams, state: SteadyState, order: int = 1, condition_limit: float = 1e12
    ) -> "FloquetModel":
        if np.ndim(state.harmonics.alpha_c) != 0:
            raise InvalidParameterError("Floquet model needs a single-cell steady state")
        if not bool(state.valid):
            detail = "; ".join(state.messages) or "invalid cell"
            raise InvalidParameterError(f"steady state is not usable: {detail}")
        return cls(
            kappa=system.kappa,
            gamma=system.gamma,
            g0=system.g0,
            omega_eff=float(state.omega_eff),
            omega_d=state.omega_d,
            delta_tilde=float(state.delta_tilde),
            harmonics=state.harmonics,
            order=order,
            condition_limit=condition_limit,
        )

    @property
    def dimension(self) -> int:
        return 4 * (2 * self.order + 1)

    def block(self, n: int) -> slice:
        start = 4 * (n + self.order)
        return slice(start, start + 4)

    def a0(self) -> np.ndarray:
        g = self.g0
        ac = complex(self.harmonics.alpha_c)
        acs = ac.conjugate()
        dt, we = self.delta_tilde, self.omega_eff
        k2, g2 = 0.5 * self.kappa, 0.5 * self.gamma
        return np.array(
            [
                [-1j * dt + k2, -1j * g * ac, 0.0, -1j * g * ac],
                [-1j * g * acs, 1j * we + g2, -1j * g * ac, 0.0],
                [0.0, 1j * g * acs, 1j * dt + k2, 1j * g * acs],
                [1j * g * acs, 0.0, 1j * g * ac, -1j * we + g2],
            ],
            dtype=complex,
        )

    def coupling_next(self) -> np.ndarray:
        """Coupling of block n to block n + 1."""
        h = self.harmonics
        b1, ap, ams = complex(h.beta_1), complex(h.alpha_plus), complex(h.alpha_minus).conjugate()
        return -1j * self.g0 * np.array(
            [
                [b1, ap, 0.0, ap],
                [ams, 0.0, ap, 0.0],
                [0.0, -ams, -b1, -ams],
                [-ams, 0.0, -ap, 0.0],
            ],
            dtype=complex,
        )

    def coupling_previous(self) -> np.ndarray:
        """Coupling of block n to block n − 1."""
        h = self.harmonics
        b1s, am, aps = complex(h.beta_1).conjugate(), complex(h.alpha_minus), complex(h.alpha_plus).conjugate()
        return -1j * self.g0 * np.array(
            [
                [b1s, am, 0.0, am],
                [aps, 0.0, am, 0.0],
                [0.0, -aps, -b1s, -aps],
                [-aps, 0.0, -am, 0.0],
            ],
            dtype=complex,
        )

    def input_map(self) -> np.ndarray:
        scale = np.array([-math.sqrt(self.kappa), -math.sqrt(self.gamma)] * 2)
        b = np.zeros((self.dimension, 4), dtype=complex)
        b[self.block(0)] = np.diag(scale)
        return b

    def matrices(self, omegas: np.ndarray) -> np.ndarray:
        """M(ω) for every ω in ``omegas``, shape (F, D, D)."""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        n_max = self.order
        m = np.zeros((omegas.size, self.dimension, self.dimension), dtype=complex)
        a0, up, down = self.a0(), self.coupling_next(), self.coupling_previous()
        eye = np.eye(4)
        for n in range(-n_max, n_max + 1):
            b = self.block(n)
            m[:, b, b] = a0 - 1j * (omegas - n * self.omega_d)[:, None, None] * eye
            if n < n_max:
                m[:, b, self.block(n + 1)] = up
            if n > -n_max:
                m[:, b, self.block(n - 1)] = down
        return m

    def check_condition(self, matrices: np.ndarray, omegas: np.ndarray) -> None:
        cond = np.linalg.cond(matrices)
        bad = ~np.isfinite(cond) | (cond > self.condition_limit)
        if bad.any():
            k = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
            raise NearSingularError(float(cond[k]), float(omegas[k]))

    def transfer(self, omegas: np.ndarray) -> np.ndarray:
        """Transfer matrices T(ω) from the four inputs to every Fourier operator, shape (F, D, 4)."""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        m = self.matrices(omegas)
        self.check_condition(m, omegas)
        b = self.input_map()
        return np.linalg.solve(m, np.broadcast_to(b, (omegas.size,) + b.shape))

    def quadrature_angle(self, theta: float, reference: str) -> float:
        """θ measured in the lab frame."""
        if reference == "lab":
            return theta
        h = self.harmonics
        if abs(h.alpha_minus) == 0 or abs(h.alpha_plus) == 0:
            return theta
        return theta + 0.5 * (np.angle(h.alpha_minus) - np.angle(h.alpha_plus))


class SpectrumEngine:
    """
    Evaluates spectrum components on one frequency grid.

    Transfer matrices are cached per argument sign·(ω + kω_d), so the
    components of one assembly share their linear solves.
    """

    def __init__(self, model: FloquetModel, noise: NoiseConfig, omegas: np.ndarray) -> None:
        self.model = model
        self.omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        self._correlator = noise.correlator()
        self._cache: Dict[Tuple[int, int], np.ndarray] = {}

    def _transfer(self, sign: int, shift: int) -> np.ndarray:
        key = (sign, shift)
        if key not in self._cache:
            self._cache[key] = self.model.transfer(sign * (self.omegas + shift * self.model.omega_d))
        return self._cache[key]

    def pair(self, op1: str, op2: str, left: int, right: int, shift: int) -> np.ndarray:
        """⟨op1⁽ˡᵉᶠᵗ⁾(ω + shift·ω_d) op2⁽ʳⁱᵍʰᵗ⁾(−ω − shift·ω_d)⟩ for one pair of Fourier blocks."""
        n_max = self.model.order
        if abs(left) > n_max or abs(right) > n_max:
            raise TruncationRangeError(f"blocks ({left}, {right}) outside the truncation |n| <= {n_max}")
        forward = self._transfer(1, shift)[:, self.model.block(left), :]
        backward = self._transfer(-1, shift)[:, self.model.block(right), :]
        r1 = np.einsum("i,fij->fj", _weights(op1), forward)
        r2 = np.einsum("i,fij->fj", _weights(op2), backward)
        return np.einsum("fi,ij,fj->f", r1, self._correlator, r2)

    def component(self, op1: str, op2: str, m: int, shift: int = 0) -> np.ndarray:
        """S⁽ᵐ⁾_{op1,op2} evaluated at ω + shift·ω_d."""
        n_max = self.model.order
        if abs(m) > 2 * n_max:
            raise TruncationRangeError(f"component m = {m} outside the truncation |m| <= {2 * n_max}")
        total = np.zeros(self.omegas.size, dtype=complex)
        for n in range(max(-n_max, m - n_max), min(n_max, m + n_max) + 1):
            total += self.pair(op1, op2, n, m - n, n + shift)
        return total


def _weights(op: str) -> np.ndarray:
    try:
        return np.asarray(OPERATORS[op], dtype=complex)
    except KeyError:
        raise InvalidParameterError(f"unknown operator {op!r}, expected one of {sorted(OPERATORS)}") from None


def _chunked(omegas: np.ndarray, evaluate: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    parts = [evaluate(omegas[i:i + CHUNK_SIZE]) for i in range(0, omegas.size, CHUNK_SIZE)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


def build_block_matrix(
    omega: float,
    harmonics: HarmonicDecomposition,
    system: SystemParams,
    omega_eff: float,
    omega_d: float,
    delta_tilde: float,
    order: int = 1,
) -> FloquetSystem:
    """
    Assemble M(ω) for one frequency.

    Args:
        omega: Analysis frequency [rad/s]
        harmonics: Single-cell steady-state coefficients
        system: Device rates
        omega_eff: Effective mechanical frequency [rad/s]
        omega_d: Drive frequency [rad/s]
        delta_tilde: Shifted detuning [rad/s]
        order: Truncation N

    Returns:
        FloquetSystem of dimension 4(2N+1)
    """
    model = FloquetModel(system.kappa, system.gamma, system.g0, omega_eff, omega_d, delta_tilde, harmonics, order)
    return FloquetSystem(
        omega=float(omega), order=order, matrix=model.matrices(np.array([omega]))[0], input_map=model.input_map()
    )


def solve_fourier_operators(omega: float, system: FloquetSystem, condition_limit: float = 1e12) -> np.ndarray:
    """
    T(ω) = M(ω)⁻¹B, mapping (d_in, c_in, d_in†, c_in†) to all Fourier operators.

    Raises:
        NearSingularError: If the condition number of M(ω) exceeds ``condition_limit``
    """
    cond = float(np.linalg.cond(system.matrix))
    if not math.isfinite(cond) or cond > condition_limit:
        raise NearSingularError(cond, system.omega)
    return np.linalg.solve(system.matrix, system.input_map)


def spectrum_component(
    op1: str, op2: str, m: int, omegas: Sequence[float] | np.ndarray, model: FloquetModel, noise: NoiseConfig
) -> np.ndarray:
    """
    S⁽ᵐ⁾ between two operators on a frequency grid.

    ``op1``/``op2`` name entries of OPERATORS. The sum runs over the Fourier
    indices n with both n and m − n inside the truncation.

    Raises:
        TruncationRangeError: If |m| > 2N
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    return _chunked(omegas, lambda chunk: SpectrumEngine(model, noise, chunk).component(op1, op2, m))


def variance_grid(model: FloquetModel, step: float = SINH_STEP) -> np.ndarray:
    """
    Integration grid for the quadrature variance.

    Sinh-spaced patches (spacing Γ·step/2 at their centre, reaching ±ω_d/2)
    sit on every multiple of ω_d and on the mechanical and cavity features
    around them, inside ±(N + 1.5)ω_d.
    """
    wd, gamma = model.omega_d, model.gamma
    reach = model.order + 1
    half_width = (reach + 0.5) * wd
    features = (0.0, model.omega_eff, -model.omega_eff, model.delta_tilde, -model.delta_tilde)
    centres = np.unique([j * wd + f for j in range(-reach, reach + 1) for f in features])
    centres = centres[np.abs(centres) <= half_width]
    s_max = math.asinh(wd / gamma)
    offsets = 0.5 * gamma * np.sinh(np.arange(-s_max, s_max + 0.5 * step, step))
    grid = (centres[:, None] + offsets[None, :]).ravel()
    grid = grid[np.abs(grid) <= half_width]
    return np.unique(np.concatenate([grid, [-half_width, half_width]]))


def spectrum_grid(
    omega_d: float,
    omega_eff: float,
    gamma: float,
    span: float = 2.5,
    points: int = 16385,
    dense_halfwidth: float = 50.0,
    per_gamma: int = 20,
) -> np.ndarray:
    """
    Measurement grid for optical spectra: uniform over ±span·ω_d, densified
    to ``per_gamma`` points per Γ within ±dense_halfwidth·Γ of 0, ±ω_d,
    ±ω_eff and ±2ω_eff.
    """
    uniform = np.linspace(-span * omega_d, span * omega_d, points)
    patch = np.linspace(-dense_halfwidth * gamma, dense_halfwidth * gamma, int(2 * dense_halfwidth * per_gamma) + 1)
    centres = {0.0, omega_d, -omega_d, omega_eff, -omega_eff, 2 * omega_eff, -2 * omega_eff}
    dense = [c + patch for c in sorted(centres)]
    grid = np.unique(np.concatenate([uniform, *dense]))
    return grid[np.abs(grid) <= span * omega_d]


def variance_integrand(model: FloquetModel, noise: NoiseConfig, grid: np.ndarray) -> np.ndarray:
    """Integrand of ⟨X²⟩ over ν, before the 1/2 and 1/2π prefactors."""
    theta = model.quadrature_angle(noise.theta, noise.quadrature_reference)
    rotation = np.exp(2j * theta)

    def evaluate(chunk: np.ndarray) -> np.ndarray:
        engine = SpectrumEngine(model, noise, chunk)
        return (
            engine.component("c", "c", -2) * rotation
            + engine.component("c", "c_dag", 0)
            + engine.component("c_dag", "c_dag", 2) * np.conj(rotation)
            + engine.component("c_dag", "c", 0)
        )

    return _chunked(grid, evaluate)


def quadrature_variance(model: FloquetModel, noise: NoiseConfig, grid: np.ndarray | None = None) -> float:
    """
    Variance ⟨X²⟩ of the mechanical quadrature at phase θ, in units where the vacuum gives 1/2.

    Each spectrum component is integrated over its own argument, which
    makes the shifted arguments of the two halves of the integrand
    immaterial.

    Raises:
        TruncatedIntegralError: If the integrand has not decayed at the grid edges
        ImaginaryResidueError: If the integral keeps an imaginary part above ``noise.imag_limit``
    """
    grid = variance_grid(model) if grid is None else np.asarray(grid, dtype=float)
    integrand = variance_integrand(model, noise, grid)
    magnitude = np.abs(integrand)
    peak = float(np.max(magnitude))
    edge = float(max(magnitude[0], magnitude[-1]))
    if peak > 0 and edge > noise.edge_decay * peak:
        raise TruncatedIntegralError(
            f"variance integrand at the grid edge is {edge / peak:.3e} of its peak (limit {noise.edge_decay:.1e})"
        )

    total = 0.5 * trapezoid(integrand, grid) / (2.0 * math.pi)
    residue = abs(total.imag) / max(abs(total.real), np.finfo(float).tiny)
    if residue > noise.imag_limit:
        raise ImaginaryResidueError(f"variance has relative imaginary part {residue:.3e}")
    if residue > noise.imag_tolerance:
        logger.warning("variance has relative imaginary part %.3e", residue)
    logger.debug("quadrature variance %.6f on %d points", total.real, grid.size)
    return float(total.real)


def _as_spectrum(grid: np.ndarray, values: np.ndarray, label: str, noise: NoiseConfig) -> SpectrumResult:
    scale = float(np.max(np.abs(values.real))) if values.size else 0.0
    residue = float(np.max(np.abs(values.imag))) / scale if scale > 0 else 0.0
    if residue > noise.imag_tolerance:
        logger.warning("%s spectrum has relative imaginary residue %.3e", label, residue)
    return SpectrumResult(freq_grid=grid, values=values.real.copy(), label=label, imag_residue=residue)


def _resolve_grid(freq_grid: Sequence[float] | np.ndarray | None, noise: NoiseConfig) -> np.ndarray:
    grid = freq_grid if freq_grid is not None else noise.freq_grid
    if grid is None:
        raise InvalidParameterError("no frequency grid given")
    return np.asarray(grid, dtype=float)


def optical_spectrum_full(
    freq_grid: Sequence[float] | np.ndarray | None, model: FloquetModel, noise: NoiseConfig
) -> SpectrumResult:
    """Output spectrum κ·S⁽⁰⁾_{d†d}(ω) straight from the full transfer matrices."""
    grid = _resolve_grid(freq_grid, noise)
    values = model.kappa * _chunked(grid, lambda chunk: SpectrumEngine(model, noise, chunk).component("d_dag", "d", 0))
    return _as_spectrum(grid, values, "optical_full", noise)


def optical_spectrum_reduced(
    freq_grid: Sequence[float] | np.ndarray | None, model: FloquetModel, noise: NoiseConfig
) -> SpectrumResult:
    """
    Output spectrum through the dressed optical susceptibility.

    Every Fourier component d†⁽ⁿ⁾ is solved with its cavity neighbours n ± 1
    eliminated and their own cavity neighbours dropped. That leaves a
    dressed susceptibility χ′ and dressed pump amplitudes acting on the
    position components x⁽ⁿ⁺ᵏ⁾, |k| <= 2, whose correlations come from the
    Floquet transfer matrices. Neighbours outside the truncation are not
    eliminated, so both paths expand over the same Fourier indices.

    d† is evaluated at +ω, where it responds through χ_c(−ω)*. The bath
    term keeps only the direct optical input.
    """
    grid = _resolve_grid(freq_grid, noise)
    h = model.harmonics
    g0, kappa, wd, n_max = model.g0, model.kappa, model.omega_d, model.order
    b1 = complex(h.beta_1)
    b1s = b1.conjugate()
    acs, ams, aps = (complex(v).conjugate() for v in (h.alpha_c, h.alpha_minus, h.alpha_plus))
    coupling = g0**2 * abs(b1) ** 2

    def evaluate(chunk: np.ndarray) -> np.ndarray:
        def chi(k: int) -> np.ndarray:
            return 1.0 / (0.5 * kappa + 1j * (model.delta_tilde - chunk + k * wd))

        engine = SpectrumEngine(model, noise, chunk)
        total = np.zeros(chunk.size, dtype=complex)
        for n in range(-n_max, n_max + 1):
            inverse = 1.0 / chi(0)
            weights = {k: np.zeros(chunk.size, dtype=complex) for k in range(-2, 3)}
            weights[-1] += -1j * g0 * aps
            weights[0] += -1j * g0 * acs
            weights[1] += -1j * g0 * ams
            bath = np.full(chunk.size, 1.0 if n == 0 else 0.0, dtype=complex)
            if n < n_max:
                up = chi(1)
                inverse = inverse + coupling * up
                weights[0] += -(g0**2) * b1 * up * aps
                weights[1] += -(g0**2) * b1 * up * acs
                weights[2] += -(g0**2) * b1 * up * ams
                if n + 1 == 0:
                    bath += -1j * g0 * b1 * up
            if n > -n_max:
                down = chi(-1)
                inverse = inverse + coupling * down
                weights[0] += -(g0**2) * b1s * down * ams
                weights[-1] += -(g0**2) * b1s * down * acs
                weights[-2] += -(g0**2) * b1s * down * aps
                if n - 1 == 0:
                    bath += -1j * g0 * b1s * down
            dressed = 1.0 / inverse

            total += kappa * noise.n_th_cavity * np.abs(dressed * bath) ** 2
            inside = [k for k in weights if abs(n + k) <= n_max]
            for k in inside:
                for l in inside:
                    amplitude = dressed * weights[k] * np.conj(dressed * weights[l])
                    total += amplitude * engine.pair("x", "x", n + k, -n - l, shift=n)
        return total

    values = kappa * _chunked(grid, evaluate)
    return _as_spectrum(grid, values, "optical_reduced", noise)

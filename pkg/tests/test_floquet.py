from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from optoforce.domain import floquet
from optoforce.domain.classical_service import ClassicalSolver
from optoforce.domain.errors import (
    ImaginaryResidueError,
    InvalidParameterError,
    NearSingularError,
    TruncatedIntegralError,
    TruncationRangeError,
)
from optoforce.domain.floquet import (
    FloquetModel,
    NoiseConfig,
    SpectrumEngine,
    build_block_matrix,
    optical_spectrum_full,
    optical_spectrum_reduced,
    quadrature_variance,
    solve_fourier_operators,
    spectrum_component,
    spectrum_grid,
    variance_grid,
)
from optoforce.domain.harmonics import HarmonicDecomposition
from optoforce.domain.models import DeviceSetup, SystemParams

TWO_PI = 2.0 * math.pi


@pytest.fixture
def decoupled_model(reference_system: SystemParams) -> FloquetModel:
    omega_eff = reference_system.omega_m
    return FloquetModel(
        kappa=reference_system.kappa,
        gamma=reference_system.gamma,
        g0=0.0,
        omega_eff=omega_eff,
        omega_d=omega_eff,
        delta_tilde=0.0,
        harmonics=HarmonicDecomposition.zeros(),
    )


@pytest.fixture
def bae_model(bae_setup: DeviceSetup, hb_solver: ClassicalSolver) -> FloquetModel:
    state = hb_solver.steady_state(bae_setup)
    return FloquetModel.from_steady_state(bae_setup.system, state)


def test_noise_config_validation() -> None:
    with pytest.raises(InvalidParameterError):
        NoiseConfig(n_th_mech=-1.0)
    with pytest.raises(InvalidParameterError):
        NoiseConfig(floquet_order=0)
    with pytest.raises(InvalidParameterError):
        NoiseConfig(freq_grid=np.array([1.0, 0.5, 2.0]))
    with pytest.raises(InvalidParameterError):
        NoiseConfig(quadrature_reference="cavity")
    correlator = NoiseConfig(n_th_cavity=0.5, n_th_mech=3.0).correlator()
    assert correlator[0, 2] == 1.5 and correlator[2, 0] == 0.5
    assert correlator[1, 3] == 4.0 and correlator[3, 1] == 3.0
    assert np.count_nonzero(correlator) == 4


def test_model_requires_positive_rates(decoupled_model: FloquetModel) -> None:
    with pytest.raises(InvalidParameterError):
        FloquetModel(0.0, 1.0, 0.0, 1.0, 1.0, 0.0, HarmonicDecomposition.zeros())
    assert decoupled_model.dimension == 12
    assert decoupled_model.block(-1) == slice(0, 4)
    assert decoupled_model.block(1) == slice(8, 12)


def test_decoupled_matrix_is_block_diagonal(reference_system: SystemParams) -> None:
    system = reference_system.__class__(**{**reference_system.__dict__, "g0": 0.0})
    h = HarmonicDecomposition(3.0 + 1j, 0.2j, 3.0 - 1j, 1e-3 + 0j, 50.0 + 0j)
    fs = build_block_matrix(0.3e6, h, system, system.omega_m, system.omega_m, 0.0, order=2)
    assert fs.dimension == 20
    off_diagonal = fs.matrix.copy()
    for i in range(fs.dimension):
        off_diagonal[i, i] = 0.0
    assert not off_diagonal.any()
    assert np.count_nonzero(fs.input_map) == 4
    assert np.flatnonzero(fs.input_map.any(axis=1)).tolist() == [8, 9, 10, 11]


def test_decoupled_transfer_is_single_mode_response(decoupled_model: FloquetModel, reference_system: SystemParams) -> None:
    omega = reference_system.omega_m + 0.37 * reference_system.gamma
    system = build_block_matrix(
        omega, decoupled_model.harmonics, reference_system.__class__(**{**reference_system.__dict__, "g0": 0.0}),
        decoupled_model.omega_eff, decoupled_model.omega_d, 0.0,
    )
    t = solve_fourier_operators(omega, system)
    row = decoupled_model.block(0)
    gamma, kappa, we = reference_system.gamma, reference_system.kappa, decoupled_model.omega_eff
    assert t[row][1, 1] == pytest.approx(-math.sqrt(gamma) / (1j * we - 1j * omega + 0.5 * gamma), rel=1e-12)
    assert t[row][0, 0] == pytest.approx(-math.sqrt(kappa) / (0.5 * kappa - 1j * omega), rel=1e-12)
    assert t[row][1, 0] == 0
    assert not t[decoupled_model.block(1)].any()


def test_decoupled_mechanical_spectra_are_lorentzian(decoupled_model: FloquetModel) -> None:
    gamma, we = decoupled_model.gamma, decoupled_model.omega_eff
    omegas = we + gamma * np.linspace(-20.0, 20.0, 41)
    noise = NoiseConfig(n_th_mech=2.0)
    s_cc = spectrum_component("c", "c_dag", 0, omegas, decoupled_model, noise)
    np.testing.assert_allclose(s_cc, 3.0 * gamma / ((0.5 * gamma) ** 2 + (omegas - we) ** 2), rtol=1e-6)
    s_dag = spectrum_component("c_dag", "c", 0, -omegas, decoupled_model, noise)
    np.testing.assert_allclose(s_dag, 2.0 * gamma / ((0.5 * gamma) ** 2 + (omegas - we) ** 2), rtol=1e-6)
    vacuum = spectrum_component("c_dag", "c", 0, omegas, decoupled_model, NoiseConfig())
    assert np.abs(vacuum).max() == 0.0


def test_component_range_and_operators(decoupled_model: FloquetModel) -> None:
    engine = SpectrumEngine(decoupled_model, NoiseConfig(), np.array([1.0, 2.0]))
    with pytest.raises(TruncationRangeError):
        engine.component("c", "c", 3)
    with pytest.raises(InvalidParameterError):
        engine.component("b", "c", 0)


def test_near_singular_matrix_is_rejected(decoupled_model: FloquetModel) -> None:
    strict = FloquetModel(**{**decoupled_model.__dict__, "condition_limit": 10.0})
    with pytest.raises(NearSingularError) as info:
        strict.transfer(np.array([0.0, strict.omega_eff]))
    assert info.value.condition > 10.0


@pytest.mark.parametrize("n_th, expected", [(0.0, 0.5), (2.0, 2.5)])
def test_decoupled_variance(decoupled_model: FloquetModel, n_th: float, expected: float) -> None:
    variance = quadrature_variance(decoupled_model, NoiseConfig(n_th_mech=n_th))
    assert variance == pytest.approx(expected, abs=1e-3)


def test_decoupled_variance_is_isotropic(decoupled_model: FloquetModel) -> None:
    values = [
        quadrature_variance(decoupled_model, NoiseConfig(n_th_mech=1.0, theta=theta, quadrature_reference="lab"))
        for theta in (0.0, 0.7, math.pi / 2)
    ]
    assert max(values) - min(values) < 1e-6


def test_truncated_grid_is_rejected(decoupled_model: FloquetModel) -> None:
    we, gamma = decoupled_model.omega_eff, decoupled_model.gamma
    narrow = we + gamma * np.linspace(-5.0, 5.0, 201)
    with pytest.raises(TruncatedIntegralError):
        quadrature_variance(decoupled_model, NoiseConfig(), narrow)


def test_imaginary_residue_is_checked(
    decoupled_model: FloquetModel, monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
) -> None:
    we, gamma = decoupled_model.omega_eff, decoupled_model.gamma

    def skewed(residue: float):
        def integrand(model: FloquetModel, noise: NoiseConfig, grid: np.ndarray) -> np.ndarray:
            return (1.0 + 1j * residue) * gamma / ((0.5 * gamma) ** 2 + (grid - we) ** 2)

        return integrand

    monkeypatch.setattr(floquet, "variance_integrand", skewed(1e-2))
    with pytest.raises(ImaginaryResidueError):
        quadrature_variance(decoupled_model, NoiseConfig())

    monkeypatch.setattr(floquet, "variance_integrand", skewed(1e-6))
    with caplog.at_level(logging.WARNING, logger="optoforce.domain.floquet"):
        variance = quadrature_variance(decoupled_model, NoiseConfig())
    assert variance == pytest.approx(0.5, abs=1e-3)
    assert "imaginary" in caplog.text


def test_variance_grid_covers_features(decoupled_model: FloquetModel) -> None:
    grid = variance_grid(decoupled_model)
    wd, gamma = decoupled_model.omega_d, decoupled_model.gamma
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == pytest.approx(-2.5 * wd) and grid[-1] == pytest.approx(2.5 * wd)
    near = grid[np.abs(grid - decoupled_model.omega_eff) < gamma]
    assert near.size >= 20


def test_spectrum_grid_resolution() -> None:
    wd, we, gamma = TWO_PI * 5.37e6, TWO_PI * 5.37e6 - 260.0, TWO_PI * 2.3e3
    grid = spectrum_grid(wd, we, gamma)
    assert grid.size >= 2**14
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == pytest.approx(-2.5 * wd) and grid[-1] == pytest.approx(2.5 * wd)
    for centre in (0.0, wd, -wd, 2 * we):
        assert np.count_nonzero(np.abs(grid - centre) <= gamma) >= 20


def test_bae_variance_is_near_vacuum(bae_model: FloquetModel) -> None:
    assert abs(complex(bae_model.harmonics.beta_1)) < 1e-9
    measured = quadrature_variance(bae_model, NoiseConfig())
    assert measured == pytest.approx(0.5, rel=0.05)
    conjugate = quadrature_variance(bae_model, NoiseConfig(theta=math.pi / 2))
    assert conjugate > measured


def test_bae_variance_ignores_pump_power(bae_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    values = []
    for scale in (0.5, 1.0, 2.0):
        pump = scale * bae_setup.drive.a_in_minus
        setup = bae_setup.with_drive(a_in_minus=pump, a_in_plus=pump)
        model = FloquetModel.from_steady_state(setup.system, hb_solver.steady_state(setup))
        values.append(quadrature_variance(model, NoiseConfig()))
    assert max(values) - min(values) < 0.02 * min(values)


def test_truncation_order_converges(bae_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    state = hb_solver.steady_state(bae_setup)
    first = quadrature_variance(FloquetModel.from_steady_state(bae_setup.system, state, order=1), NoiseConfig())
    second = quadrature_variance(FloquetModel.from_steady_state(bae_setup.system, state, order=2), NoiseConfig())
    assert second == pytest.approx(first, rel=1e-2)


def test_undriven_state_has_no_odd_components(bae_model: FloquetModel) -> None:
    omegas = np.linspace(-1.5, 1.5, 31) * bae_model.omega_d
    for m in (-1, 1):
        odd = spectrum_component("c", "c_dag", m, omegas, bae_model, NoiseConfig())
        assert np.abs(odd).max() < 1e-9 * np.abs(
            spectrum_component("c", "c_dag", 0, omegas, bae_model, NoiseConfig())
        ).max()


def test_decoupled_output_spectrum_is_flat_vacuum(decoupled_model: FloquetModel) -> None:
    grid = np.linspace(-2.0, 2.0, 101) * decoupled_model.omega_d
    full = optical_spectrum_full(grid, decoupled_model, NoiseConfig())
    reduced = optical_spectrum_reduced(grid, decoupled_model, NoiseConfig())
    assert np.abs(full.values).max() == 0.0
    assert np.abs(reduced.values).max() == 0.0
    assert full.label == "optical_full" and reduced.label == "optical_reduced"


def test_thermal_cavity_output_is_lorentzian(decoupled_model: FloquetModel) -> None:
    kappa = decoupled_model.kappa
    grid = np.linspace(-2.0, 2.0, 101) * decoupled_model.omega_d
    full = optical_spectrum_full(grid, decoupled_model, NoiseConfig(n_th_cavity=1.0))
    expected = kappa**2 / ((0.5 * kappa) ** 2 + grid**2)
    np.testing.assert_allclose(full.values, expected, rtol=1e-9)
    reduced = optical_spectrum_reduced(grid, decoupled_model, NoiseConfig(n_th_cavity=1.0))
    np.testing.assert_allclose(reduced.values, expected, rtol=1e-9)


@pytest.mark.parametrize("order", [1, 2])
def test_output_spectra_paths_agree(reference_setup: DeviceSetup, hb_solver: ClassicalSolver, order: int) -> None:
    state = hb_solver.steady_state(reference_setup)
    model = FloquetModel.from_steady_state(reference_setup.system, state, order=order)
    assert abs(complex(model.harmonics.beta_1)) > 50.0
    wd, gamma = model.omega_d, model.gamma
    patch = gamma * np.linspace(-3.0, 3.0, 13)
    grid = np.sort(np.concatenate([-wd + patch, patch, wd + patch]))
    full = optical_spectrum_full(grid, model, NoiseConfig())
    reduced = optical_spectrum_reduced(grid, model, NoiseConfig())
    assert np.all(full.values >= -1e-10 * full.values.max())
    for centre in (-wd, 0.0, wd):
        near = np.abs(grid - centre) <= 3.0 * gamma
        significant = near & (full.values > 1e-2 * full.values[near].max())
        assert significant.any()
        np.testing.assert_allclose(reduced.values[significant], full.values[significant], rtol=0.05)
    assert full.imag_residue < 1e-8


def test_pair_respects_truncation(decoupled_model: FloquetModel) -> None:
    engine = SpectrumEngine(decoupled_model, NoiseConfig(n_th_mech=1.0), np.array([decoupled_model.omega_eff]))
    with pytest.raises(TruncationRangeError):
        engine.pair("x", "x", 2, 0, shift=0)
    summed = sum(engine.pair("c", "c_dag", n, -n, shift=n) for n in (-1, 0, 1))
    np.testing.assert_allclose(summed, engine.component("c", "c_dag", 0))

from __future__ import annotations

import math

import numpy as np
import pytest

from optoforce.domain import classical_service
from optoforce.domain.classical import ClassicalProblem, IntegratorConfig
from optoforce.domain.classical_service import ClassicalSolver
from optoforce.domain.errors import InvalidParameterError, SnapToContactError
from optoforce.domain.harmonic_balance import linear_estimates
from optoforce.domain.models import DeviceSetup

TWO_PI = 2.0 * math.pi


@pytest.fixture
def coupled_fast_setup(fast_setup: DeviceSetup) -> DeviceSetup:
    return fast_setup.with_system(g0=TWO_PI * 200.0).with_drive(a_in_minus=2.0e3, a_in_plus=2.0e3)


def test_rk4_matches_decoupled_closed_form(fast_setup: DeviceSetup) -> None:
    gamma, omega_d = fast_setup.system.gamma, fast_setup.drive.omega_d
    setups = [fast_setup.with_omega_eff(omega_d + k * gamma) for k in np.linspace(-3.0, 3.0, 7)]
    state = ClassicalSolver().steady_state_batch(setups)

    assert np.all(state.valid)
    omega_eff = np.array([s.omega_eff for s in setups])
    expected = -math.sqrt(gamma) * fast_setup.drive.beta_in / (1j * (omega_eff - omega_d) + 0.5 * gamma)
    np.testing.assert_allclose(state.harmonics.beta_1, expected, rtol=1e-6)

    linear = linear_estimates(ClassicalProblem.from_setups(setups), 0.0)
    np.testing.assert_allclose(state.harmonics.alpha_minus, linear.alpha_minus, rtol=1e-4)
    np.testing.assert_allclose(state.harmonics.alpha_plus, linear.alpha_plus, rtol=1e-4)
    assert state.windows >= 2


@pytest.mark.slow
def test_rk4_agrees_with_harmonic_balance(coupled_fast_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    integrated = ClassicalSolver().steady_state(coupled_fast_setup)
    balanced = hb_solver.steady_state(coupled_fast_setup)
    assert integrated.valid and balanced.valid
    assert abs(balanced.harmonics.alpha_c) > 0.0
    assert complex(integrated.harmonics.beta_1) == pytest.approx(complex(balanced.harmonics.beta_1), rel=1e-4)
    assert complex(integrated.harmonics.alpha_c) == pytest.approx(complex(balanced.harmonics.alpha_c), rel=5e-3)
    assert balanced.windows == 0


def test_rk4_reaches_reference_amplitude(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    cfg = IntegratorConfig(initial="harmonic-balance", transient_over_gamma=0.05, convergence_tol=1e-5, max_windows=400)
    integrated = ClassicalSolver(cfg).steady_state(reference_setup)
    balanced = hb_solver.steady_state(reference_setup)

    assert integrated.valid and integrated.windows >= 2
    assert float(integrated.harmonics.residual) < 1e-3
    assert abs(complex(integrated.harmonics.beta_1)) == pytest.approx(100.0, rel=1e-2)
    assert complex(integrated.harmonics.beta_1) == pytest.approx(complex(balanced.harmonics.beta_1), rel=1e-2)
    assert complex(integrated.harmonics.alpha_c) == pytest.approx(complex(balanced.harmonics.alpha_c), rel=1e-2)


@pytest.mark.slow
def test_harmonic_balance_seed_gives_same_state(coupled_fast_setup: DeviceSetup) -> None:
    seeded = ClassicalSolver(IntegratorConfig(initial="harmonic-balance")).steady_state(coupled_fast_setup)
    cold = ClassicalSolver().steady_state(coupled_fast_setup)
    assert complex(seeded.harmonics.beta_1) == pytest.approx(complex(cold.harmonics.beta_1), rel=1e-6)


def test_single_cell_raises_and_batch_flags(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    crushed = reference_setup.with_tip(h=1.0e-11)
    with pytest.raises(SnapToContactError):
        hb_solver.steady_state(crushed)

    batch = hb_solver.steady_state_batch([reference_setup, crushed])
    assert list(batch.valid) == [True, False]
    assert batch.messages[0] == ""
    assert "exceeds" in batch.messages[1]
    with pytest.raises(InvalidParameterError):
        hb_solver.steady_state_batch([])


def test_threaded_batches_match_serial(reference_setup: DeviceSetup) -> None:
    cfg = IntegratorConfig(method="harmonic-balance")
    setups = [reference_setup.with_drive(phi_m=phi) for phi in np.linspace(0.0, 2.0 * math.pi, 7)]
    serial = ClassicalSolver(cfg).steady_state_batch(setups)
    threaded = ClassicalSolver(cfg, max_workers=3).steady_state_batch(setups)
    np.testing.assert_array_equal(serial.harmonics.alpha_c, threaded.harmonics.alpha_c)
    np.testing.assert_array_equal(serial.delta_pump, threaded.delta_pump)


def test_compensated_state_has_zero_shifted_detuning(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    state = hb_solver.steady_state(reference_setup)
    assert float(state.delta_tilde) == pytest.approx(0.0, abs=1e-6 * reference_setup.system.gamma)
    assert float(state.delta_pump) != 0.0


def test_balanced_pumps_give_full_contrast_fringe(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    phis = TWO_PI * np.arange(192) / 192
    rmap = hb_solver.response_map(phis, [reference_setup.drive.omega_d], reference_setup, 0.0)
    fringe = rmap.alpha_c_abs[:, 0]
    assert rmap.valid.all()
    assert fringe.min() < 0.03 * fringe.max()
    assert rmap.alpha_c_max == pytest.approx(fringe.max())


def test_unbalanced_pumps_lose_contrast(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    unbalanced = reference_setup.with_drive(a_in_plus=0.5 * reference_setup.drive.a_in_minus)
    phis = TWO_PI * np.arange(96) / 96
    fringe = hb_solver.response_map(phis, [reference_setup.drive.omega_d], unbalanced, 0.0).alpha_c_abs[:, 0]
    assert fringe.min() > 0.1 * fringe.max()


def test_response_map_is_periodic_in_drive_phase(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    phis = np.linspace(0.0, 1.5 * math.pi, 5)
    wd, gamma = reference_setup.drive.omega_d, reference_setup.system.gamma
    axis = [wd - 0.5 * gamma, wd, wd + 0.5 * gamma]
    first = hb_solver.response_map(phis, axis, reference_setup, 1.0)
    shifted = hb_solver.response_map(phis + TWO_PI, axis, reference_setup, 1.0)
    np.testing.assert_allclose(first.alpha_c_abs, shifted.alpha_c_abs, rtol=1e-8)
    np.testing.assert_allclose(first.response, (first.alpha_c_abs - 1.0) / first.alpha_c_max)


def test_distance_axis_flags_snapped_columns(reference_setup: DeviceSetup, hb_solver: ClassicalSolver) -> None:
    rmap = hb_solver.response_map([0.0, math.pi], [0.4e-9, 0.5e-9, 1.0e-11], reference_setup, 0.0, axis="h")
    assert rmap.valid[:, :2].all()
    assert not rmap.valid[:, 2].any()
    assert np.isnan(rmap.omega_eff[2]) and np.isnan(rmap.response[:, 2]).all()
    assert rmap.omega_eff[0] < rmap.omega_eff[1] < reference_setup.system.omega_m
    assert rmap.messages
    with pytest.raises(InvalidParameterError):
        hb_solver.response_map([0.0], [0.5e-9], reference_setup, 0.0, axis="kappa")


def test_narrow_rk4_batches_stay_on_one_thread(fast_setup: DeviceSetup, monkeypatch: pytest.MonkeyPatch) -> None:
    def no_pool(*args, **kwargs):
        raise AssertionError("thread pool used for a narrow RK4 batch")

    monkeypatch.setattr(classical_service, "ThreadPoolExecutor", no_pool)
    gamma = fast_setup.system.gamma
    setups = [fast_setup.with_omega_eff(fast_setup.drive.omega_d + k * gamma) for k in (-1.0, 0.0, 1.0)]
    threaded = ClassicalSolver(max_workers=4).steady_state_batch(setups)
    assert np.all(threaded.valid)
    assert classical_service.MIN_RK4_CHUNK > len(setups)

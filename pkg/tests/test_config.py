from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from optoforce.domain.errors import ConfigError
from optoforce.infra.config import (
    SimulationConfig,
    flatten,
    integrator_config,
    load_config,
    noise_config,
    override_paths,
    parse_override,
)
from optoforce.infra.di import build_container


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("OPTOFORCE_SYSTEM__KAPPA_HZ", raising=False)


def test_defaults_are_the_reference_device() -> None:
    config = load_config("defaults")
    assert config.system.omega_m_hz == 5.37e6
    assert config.system.kappa_hz == 1.0e6
    assert config.system.gamma_hz == 2.3e3
    assert config.system.m_eff_kg == 5.4e-11
    assert config.tip.h_m == 0.5e-9
    assert config.drive.a_in_minus.magnitude == 1.62e5
    assert config.drive.phi_m_rad == pytest.approx(0.86 * math.pi)
    assert config.drive.delta_hz == "compensate"
    assert config.drive.beta_in_mag == "auto"
    assert config.drive.omega_d_hz == "resonant"
    assert config.integrator.dt_periods_per_step == 1.0 / 64.0


def test_unknown_keys_are_reported_with_their_path() -> None:
    with pytest.raises(ConfigError) as excinfo:
        load_config(None, ["system.kapa_hz=1e6"])
    assert any(p.startswith("system.kapa_hz") for p in excinfo.value.problems)


def test_every_invalid_key_is_reported() -> None:
    with pytest.raises(ConfigError) as excinfo:
        load_config(None, ["system.gamma_hz=-1", "grids.monotonic_points=80", "drive.omega_d_hz=-1.0"])
    paths = " ".join(excinfo.value.problems)
    assert "system.gamma_hz" in paths
    assert "grids.monotonic_points" in paths
    assert "drive.omega_d_hz" in paths


def test_precedence_override_then_file_then_environment(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    monkeypatch.setenv("OPTOFORCE_SYSTEM__KAPPA_HZ", "2e6")
    assert load_config().system.kappa_hz == 2.0e6

    config_file = tmp_path / "device.toml"
    config_file.write_text("[system]\nkappa_hz = 3e6\n", encoding="utf-8")
    assert load_config(config_file).system.kappa_hz == 3.0e6
    assert load_config(config_file, ["system.kappa_hz=4e6"]).system.kappa_hz == 4.0e6


def test_json_file_and_data_product_provenance(tmp_path: Path) -> None:
    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps({"tip": {"h_m": 4e-10}}), encoding="utf-8")
    assert load_config(plain).tip.h_m == 4e-10

    document = SimulationConfig(tip={"h_m": 3e-10}).to_document()
    product = tmp_path / "product.json"
    product.write_text(json.dumps({"payload": [], "provenance": {"config": document}}), encoding="utf-8")
    reloaded = load_config(product)
    assert reloaded.to_document() == document


def test_unreadable_files(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[system\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_parse_override_values() -> None:
    assert parse_override("system.g0_hz=0") == (["system", "g0_hz"], 0)
    assert parse_override("drive.delta_hz=compensate") == (["drive", "delta_hz"], "compensate")
    assert parse_override("grids.beta1_values=[0, 50]") == (["grids", "beta1_values"], [0, 50])
    assert parse_override("drive.a_in_minus.phase_rad = 0.5") == (["drive", "a_in_minus", "phase_rad"], 0.5)
    for bad in ("kappa=1", "system.kappa_hz", ".x=1"):
        with pytest.raises(ConfigError):
            parse_override(bad)


def test_pump_shorthands() -> None:
    config = load_config(None, ["drive.a_in_plus=[2e5, 0.25]", "drive.a_in_minus=1e5"])
    assert config.drive.a_in_plus.magnitude == 2e5
    assert config.drive.a_in_plus.phase_rad == 0.25
    assert config.drive.a_in_minus.magnitude == 1e5


def test_integrator_steps_must_be_whole() -> None:
    with pytest.raises(ConfigError):
        load_config(None, ["integrator.dt_periods_per_step=0.0155"])
    cfg = integrator_config(load_config(None, ["integrator.method='harmonic-balance'"]))
    assert cfg.method == "harmonic-balance"
    assert cfg.steps_per_period == 64


def test_noise_section_maps_to_domain() -> None:
    noise = noise_config(load_config(None, ["noise.n_th_mech=2", "noise.quadrature_reference='lab'"]))
    assert noise.n_th_mech == 2.0
    assert noise.quadrature_reference == "lab"
    assert noise.floquet_order == 1


def test_override_paths_and_flatten() -> None:
    assert override_paths(["tip.h_m=1e-9", "noise.floquet_order=2"]) == {"tip.h_m": 1e-9, "noise.floquet_order": 2}
    assert flatten({"a": {"b": 1, "c": {"d": 2}}, "e": 3}) == {"a.b": 1, "a.c.d": 2, "e": 3}


def test_noise_linearity_threshold_reaches_the_service() -> None:
    assert load_config(None).noise.linearity_threshold == 0.1
    config = load_config(None, ["noise.linearity_threshold=0.3"])
    assert config.noise.linearity_threshold == 0.3
    assert config.integrator.linearity_threshold == 0.1
    assert build_container(config).noise_service().linearity_threshold == 0.3

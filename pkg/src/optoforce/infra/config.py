"""
Configuration management using pydantic-settings.

Values come, in decreasing precedence, from ``--set`` overrides, a TOML or
JSON config file, ``OPTOFORCE_*`` environment variables (or ``.env``) and
the defaults below, which are the reference device of the sensor study.
Frequencies are given in Hz and converted to rad/s when mapped onto the
domain.
"""

from __future__ import annotations

import json
import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from optoforce.domain.classical import IntegratorConfig
from optoforce.domain.errors import ConfigError, InvalidParameterError
from optoforce.domain.floquet import NoiseConfig

logger = logging.getLogger(__name__)

DEFAULTS_NAME = "defaults"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSection(_Section):
    """Device rates; every frequency in Hz."""

    omega_c_hz: float = Field(default=4.5e9, gt=0, description="Cavity resonance ω_c/2π")
    omega_m_hz: float = Field(default=5.37e6, gt=0, description="Bare mechanical resonance ω_m/2π")
    kappa_hz: float = Field(default=1.0e6, gt=0, description="Cavity decay rate κ/2π")
    gamma_hz: float = Field(default=2.3e3, gt=0, description="Mechanical decay rate Γ/2π")
    m_eff_kg: float = Field(default=5.4e-11, gt=0, description="Effective mass")
    g0_hz: float = Field(default=1.0e3, ge=0, description="Single-photon coupling g0/2π; 0 decouples the modes")


class TipSection(_Section):
    """Van der Waals tip-surface interaction."""

    hamaker_j: float = Field(default=0.071e-18, ge=0, description="Hamaker constant H")
    r_tip_m: float = Field(default=5.0e-9, ge=0, description="Tip radius")
    h_m: float = Field(default=0.5e-9, gt=0, description="Tip-surface distance")


class PumpSection(_Section):
    """One optical pump as magnitude and phase."""

    magnitude: float = Field(default=1.62e5, ge=0, description="|ā_in| in sqrt(photons/s)")
    phase_rad: float = Field(default=0.0, description="Pump phase")


class DriveSection(_Section):
    """Optical pumps and the coherent mechanical drive."""

    a_in_minus: PumpSection = Field(default_factory=PumpSection, description="Pump at ω_p − ω_d")
    a_in_plus: PumpSection = Field(default_factory=PumpSection, description="Pump at ω_p + ω_d")
    delta_hz: float | Literal["compensate"] = Field(
        default="compensate",
        description="Pump detuning Δ/2π, or 'compensate' to hold the shifted detuning at zero",
    )
    beta_in_mag: float | Literal["auto"] = Field(
        default="auto",
        description="Mechanical drive |β̄_in| in sqrt(phonons/s), or 'auto' to reach target_beta1 on resonance",
    )
    target_beta1: float = Field(default=100.0, ge=0, description="|β̄₁| reached by the 'auto' drive")
    phi_m_rad: float = Field(default=0.86 * math.pi, description="Mechanical drive phase φ_m")
    omega_d_hz: float | Literal["resonant"] = Field(
        default="resonant", description="Drive frequency ω_d/2π, or 'resonant' for ω_eff(h)"
    )

    @field_validator("a_in_minus", "a_in_plus", mode="before")
    @classmethod
    def _pump_pair(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError("pump must be [magnitude, phase_rad]")
            return {"magnitude": value[0], "phase_rad": value[1]}
        if isinstance(value, (int, float)):
            return {"magnitude": value}
        return value

    @field_validator("delta_hz", "beta_in_mag", "omega_d_hz")
    @classmethod
    def _finite(cls, value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @field_validator("beta_in_mag")
    @classmethod
    def _non_negative(cls, value: Any) -> Any:
        if isinstance(value, float) and value < 0:
            raise ValueError("must be non-negative")
        return value

    @field_validator("omega_d_hz")
    @classmethod
    def _positive(cls, value: Any) -> Any:
        if isinstance(value, float) and value <= 0:
            raise ValueError("must be positive")
        return value


class NoiseSection(_Section):
    """Bath occupancies and Floquet settings."""

    n_th_cavity: float = Field(default=0.0, ge=0, description="Thermal photon occupancy")
    n_th_mech: float = Field(default=0.0, ge=0, description="Thermal phonon occupancy")
    floquet_order: int = Field(default=1, ge=1, description="Fourier truncation N")
    theta_rad: float = Field(default=0.0, description="Quadrature phase θ")
    quadrature_reference: Literal["bae", "lab"] = Field(
        default="bae", description="Measure θ from the backaction-evading quadrature or from the lab frame"
    )
    condition_limit: float = Field(default=1e12, gt=0, description="Largest accepted condition number of M(ω)")
    edge_decay: float = Field(default=1e-6, gt=0, description="Largest integrand at the grid edge relative to its peak")
    imag_tolerance: float = Field(default=1e-8, gt=0, description="Relative imaginary residue that is logged")
    imag_limit: float = Field(default=1e-4, gt=0, description="Relative imaginary residue that is rejected")
    linearity_threshold: float = Field(
        default=0.1,
        gt=0,
        description=(
            "Bound on 2g0|β̄₁|/κ above which a noise point carries a linearization warning. "
            "The reference drive |β̄₁| = 100 sits at about 0.2, so reference runs are flagged "
            "unless this is raised"
        ),
    )

    def to_domain(self) -> NoiseConfig:
        return NoiseConfig(
            n_th_cavity=self.n_th_cavity,
            n_th_mech=self.n_th_mech,
            floquet_order=self.floquet_order,
            theta=self.theta_rad,
            quadrature_reference=self.quadrature_reference,
            condition_limit=self.condition_limit,
            edge_decay=self.edge_decay,
            imag_tolerance=self.imag_tolerance,
            imag_limit=self.imag_limit,
        )


class IntegratorSection(_Section):
    """Classical integration and steady-state detection."""

    dt_periods_per_step: float = Field(
        default=1.0 / 64.0, gt=0, le=0.02, description="Time step as a fraction of the drive period"
    )
    transient_over_gamma: float = Field(default=10.0, gt=0, description="Discarded transient in units of 1/Γ")
    window_periods: int = Field(default=20, ge=20, description="Drive periods per projection window")
    tol: float = Field(default=1e-8, gt=0, description="Relative change between windows that counts as converged")
    abs_floor: float = Field(default=1e-9, gt=0, description="Absolute floor of the relative-change test")
    max_windows: int = Field(default=5000, ge=2, description="Windows before giving up")
    method: Literal["rk4", "harmonic-balance"] = Field(default="rk4", description="Steady-state method")
    initial: Literal["zero", "harmonic-balance"] = Field(default="zero", description="Initial state of rk4")
    residual_threshold: float = Field(default=1e-3, gt=0, description="Ansatz residual that is warned about")
    linearity_threshold: float = Field(
        default=0.1, gt=0, description="Bound on 2g0|β̄₁|/κ above which the steady-state log warns"
    )

    @field_validator("dt_periods_per_step")
    @classmethod
    def _integer_steps(cls, value: float) -> float:
        steps = 1.0 / value
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"1/dt_periods_per_step = {steps:.6g} must be an integer")
        return value

    def to_domain(self) -> IntegratorConfig:
        return IntegratorConfig(
            dt_periods_per_step=self.dt_periods_per_step,
            transient_over_gamma=self.transient_over_gamma,
            window_periods=self.window_periods,
            convergence_tol=self.tol,
            abs_floor=self.abs_floor,
            max_windows=self.max_windows,
            method=self.method,
            initial=self.initial,
            residual_threshold=self.residual_threshold,
            linearity_threshold=self.linearity_threshold,
        )


class GridsSection(_Section):
    """Sweep grids; spans are in units of Γ unless stated otherwise."""

    phi_points: int = Field(default=96, ge=1, description="Response-map phases over [0, 2π)")
    response_axis: Literal["omega_eff", "h"] = Field(default="omega_eff", description="Response-map sweep axis")
    response_points: int = Field(default=81, ge=1, description="Points along the response-map axis")
    response_span_gamma: float = Field(default=1.0, gt=0, description="ω_eff half-range around ω_d")
    h_min_m: float = Field(default=0.2e-9, gt=0, description="Smallest distance of an h-axis map")
    h_max_m: float = Field(default=1.0e-9, gt=0, description="Largest distance of an h-axis map")
    setpoint_points: int = Field(default=96, ge=8, description="Phases scanned for the mid-fringe setpoint")
    monotonic_points: int = Field(default=81, ge=3, description="Odd number of detunings probed for monotonicity")
    monotonic_span_gamma: float = Field(default=1.0, gt=0, description="Half-range of the monotonicity probe")
    detuning_points: int = Field(default=21, ge=1, description="Points of the variance-vs-detuning sweep")
    detuning_span_gamma: float = Field(default=0.2, ge=0, description="Half-range of the variance-vs-detuning sweep")
    beta1_values: List[float] = Field(
        default_factory=lambda: [0.0, 12.5, 25.0, 50.0, 100.0], description="Target |β̄₁| of the drive sweep"
    )
    spectrum_beta1: List[float] = Field(
        default_factory=lambda: [0.0, 100.0], description="Target |β̄₁| of the noise spectra"
    )
    spectrum_span: float = Field(default=2.5, gt=0, description="Spectrum half-range in units of ω_d")
    spectrum_points: int = Field(default=16385, ge=3, description="Uniform points of the spectrum grid")

    @field_validator("monotonic_points")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("must be odd so that zero detuning is on the grid")
        return value

    @field_validator("beta1_values", "spectrum_beta1")
    @classmethod
    def _amplitudes(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("must be non-empty")
        if any(v < 0 for v in value):
            raise ValueError("amplitudes must be non-negative")
        return value


class SimulationConfig(BaseSettings):
    """Complete, validated simulation configuration."""

    model_config = SettingsConfigDict(
        env_prefix="OPTOFORCE_",
        env_nested_delimiter="__",
        case_sensitive=False,
        env_file=".env",
        env_file_encoding="utf-8",
        extra="forbid",
    )

    system: SystemSection = Field(default_factory=SystemSection)
    tip: TipSection = Field(default_factory=TipSection)
    drive: DriveSection = Field(default_factory=DriveSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    grids: GridsSection = Field(default_factory=GridsSection)

    def to_document(self) -> Dict[str, Any]:
        """Plain nested dict of every resolved value; loading it back gives an equal config."""
        return self.model_dump(mode="json")


def integrator_config(config: SimulationConfig) -> IntegratorConfig:
    try:
        return config.integrator.to_domain()
    except InvalidParameterError as exc:
        raise ConfigError("invalid integrator settings", [f"integrator: {exc}"]) from exc


def noise_config(config: SimulationConfig) -> NoiseConfig:
    try:
        return config.noise.to_domain()
    except InvalidParameterError as exc:
        raise ConfigError("invalid noise settings", [f"noise: {exc}"]) from exc


def parse_override(text: str) -> tuple[List[str], Any]:
    """
    Split ``section.key=value`` into a key path and a value.

    The value is read as a TOML value when possible (numbers, booleans,
    arrays, quoted strings) and kept as a bare string otherwise.
    """
    key, sep, raw = text.partition("=")
    path = [part.strip() for part in key.split(".")]
    if not sep or len(path) < 2 or not all(path):
        raise ConfigError("invalid override", [f"{text!r}: expected section.key=value"])
    try:
        value = tomllib.loads(f"value = {raw.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Deep-merge ``--set`` overrides into ``document`` (which is modified and returned)."""
    for text in overrides:
        path, value = parse_override(text)
        node = document
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("invalid override", [f"{'.'.join(path)}: {part} is not a section"])
            node = child
        node[path[-1]] = value
    return document


def read_document(path: str | Path | None) -> Dict[str, Any]:
    """
    Parse a config file into a nested dict.

    TOML and JSON files are accepted. A JSON data product is accepted too;
    its embedded ``provenance.config`` is returned. ``None`` or
    ``"defaults"`` yields an empty document.
    """
    if path is None or str(path) == DEFAULTS_NAME:
        return {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("config file not found", [str(path)]) from exc

    try:
        if path.suffix.lower() == ".json":
            document = json.loads(text) if text.strip() else {}
            provenance = document.get("provenance") if isinstance(document, dict) else None
            if isinstance(provenance, dict) and "config" in provenance:
                document = provenance["config"]
        else:
            document = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}", [str(exc)]) from exc
    if not isinstance(document, dict):
        raise ConfigError(f"cannot parse {path}", ["top level must be a table of sections"])
    return document


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> SimulationConfig:
    """
    Load and validate the simulation configuration.

    Args:
        path: TOML/JSON config file, None or "defaults" for defaults only
        overrides: ``section.key=value`` strings applied on top of the file

    Returns:
        SimulationConfig with defaults and environment applied

    Raises:
        ConfigError: On parse errors, unknown keys or invalid values; every
            failing key is reported with its dotted path
    """
    document = apply_overrides(read_document(path), overrides)
    try:
        config = SimulationConfig(**document)
    except ValidationError as exc:
        raise ConfigError("invalid configuration", _problems(exc)) from exc
    logger.debug("configuration loaded from %s with %d override(s)", path or DEFAULTS_NAME, len(overrides))
    return config


def _problems(exc: ValidationError) -> List[str]:
    problems = []
    for error in exc.errors():
        # union members add their type name to the location
        loc = [str(part) for part in error["loc"] if not _is_union_tag(part)]
        problems.append(f"{'.'.join(loc)}: {error['msg']}")
    return problems


def _is_union_tag(part: Any) -> bool:
    return isinstance(part, str) and (part in ("float", "int") or part.startswith("literal["))


def override_paths(overrides: Sequence[str]) -> Dict[str, Any]:
    """Overrides as a flat mapping from dotted key to parsed value, for provenance."""
    parsed: Dict[str, Any] = {}
    for text in overrides:
        path, value = parse_override(text)
        parsed[".".join(path)] = value
    return parsed


def flatten(document: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested mapping as dotted keys."""
    flat: Dict[str, Any] = {}
    for key, value in document.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat



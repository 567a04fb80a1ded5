"""
ExperimentService: operating-point logic and dispatch of every experiment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .classical_service import RESPONSE_AXES, ClassicalSolver
from .data_product import Column, DataProduct
from .errors import ConvergenceError, InvalidParameterError, NoSetpointError, PhysicsError, SetpointInvalidError
from .harmonic_balance import measurement_rate
from .models import DeviceSetup
from .noise_service import NoiseService, VariancePoint
from .tip_surface import derive_quantities, frequency_shift

logger = logging.getLogger(__name__)

EXPERIMENTS = ("derive", "classical", "response-map", "noise-spectrum", "variance-detuning", "variance-drive")

MIN_CONTRAST = 1e-3
NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class ExperimentGrids:
    """
    Sweep grids of all experiments, already in SI units.

    Args:
        phi_m: Mechanical drive phases of the response map [rad]
        response_axis: "omega_eff" or "h"
        response_values: ω_eff [rad/s] or h [m] values of the response map
        setpoint_points: Phases scanned by the setpoint search
        monotonic_detuning: Detunings ω_eff − ω_d probed by the monotonic-region search [rad/s]
        detuning: Detunings of the variance sweep [rad/s]
        beta1: Target |β̄₁| values of the drive sweep
        spectrum_beta1: Target |β̄₁| values of the noise spectra
        spectrum: Frequencies of the noise spectra [rad/s]; None selects the default grid
    """

    phi_m: np.ndarray
    response_axis: str
    response_values: np.ndarray
    setpoint_points: int
    monotonic_detuning: np.ndarray
    detuning: np.ndarray
    beta1: np.ndarray
    spectrum_beta1: np.ndarray
    spectrum: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.response_axis not in RESPONSE_AXES:
            raise InvalidParameterError(f"response axis must be one of {RESPONSE_AXES}, got {self.response_axis!r}")
        for name in ("phi_m", "response_values", "monotonic_detuning", "detuning", "beta1", "spectrum_beta1"):
            if np.asarray(getattr(self, name)).size == 0:
                raise InvalidParameterError(f"grid {name} must be non-empty")
        if self.setpoint_points < 8:
            raise InvalidParameterError("setpoint search needs at least 8 phases")
        probe = np.asarray(self.monotonic_detuning)
        if probe.size < 3 or probe.size % 2 == 0 or not np.all(np.diff(probe) > 0):
            raise InvalidParameterError("monotonic detuning grid must be increasing with an odd number of points")
        if not math.isclose(float(probe[probe.size // 2]), 0.0, abs_tol=1e-9 * float(np.ptp(probe))):
            raise InvalidParameterError("monotonic detuning grid must be centred on zero")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment to run, with the provenance of its resolved parameters."""

    experiment: str
    setup: DeviceSetup
    grids: ExperimentGrids
    overrides: Dict[str, Any] = field(default_factory=dict)
    output: Optional[str] = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise InvalidParameterError(f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}")


@dataclass(frozen=True)
class Setpoint:
    """Mid-fringe operating point on the rising edge of |ᾱ_c|(φ_m)."""

    phi_m: float
    magnitude: float
    alpha_c_max: float
    alpha_c_min: float
    contrast: float


@dataclass(frozen=True)
class MonotonicRegion:
    """Detuning interval around zero with a strictly monotonic response."""

    lower: float
    upper: float
    slope: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class ExperimentService:
    """
    Runs experiments end to end and packs their results as data products.
    """

    solver: ClassicalSolver
    noise_service: NoiseService

    def find_setpoint(self, setup: DeviceSetup, points: int = 96) -> Setpoint:
        """
        Mid-fringe drive phase at ω_eff = ω_d.

        Scans φ_m over [0, 2π), takes the first rising crossing of
        (max + min)/2 and refines it by linear interpolation.

        Raises:
            NoSetpointError: If the fringe contrast is below 1e-3
            ConvergenceError: If any scanned cell has no steady state
        """
        resonant = setup.with_omega_eff(setup.drive.omega_d)
        phis = 2.0 * math.pi * np.arange(points) / points
        batch = self.solver.steady_state_batch([resonant.with_drive(phi_m=float(p)) for p in phis])
        valid = np.asarray(batch.valid)
        if not valid.all():
            first = next(m for m, ok in zip(batch.messages, valid) if not ok)
            raise ConvergenceError(f"setpoint scan failed at {int((~valid).sum())} phase(s): {first}")

        magnitude = np.abs(np.asarray(batch.harmonics.alpha_c))
        top, bottom = float(magnitude.max()), float(magnitude.min())
        contrast = (top - bottom) / top if top > 0 else 0.0
        if contrast < MIN_CONTRAST:
            raise NoSetpointError(f"fringe contrast {contrast:.3e} below {MIN_CONTRAST:g}")

        mid = 0.5 * (top + bottom)
        following = np.roll(magnitude, -1)
        rising = np.flatnonzero((magnitude < mid) & (following >= mid))
        k = int(rising[0])
        fraction = (mid - magnitude[k]) / (following[k] - magnitude[k])
        phi = float((phis[k] + fraction * 2.0 * math.pi / points) % (2.0 * math.pi))

        state = self.solver.steady_state(resonant.with_drive(phi_m=phi))
        setpoint = Setpoint(phi, float(abs(state.harmonics.alpha_c)), top, bottom, contrast)
        logger.info("setpoint phi_m = %.4f rad (%.4f pi), |alpha_c| = %.6g", phi, phi / math.pi, setpoint.magnitude)
        return setpoint

    def monotonic_region(self, setup: DeviceSetup, setpoint: Setpoint, detuning: np.ndarray) -> MonotonicRegion:
        """
        Largest detuning interval around zero on which the response is strictly monotonic.

        Args:
            setup: Operating point; φ_m is replaced by the setpoint phase
            setpoint: Result of find_setpoint
            detuning: Odd, increasing grid of ω_eff − ω_d centred on zero [rad/s]

        Raises:
            SetpointInvalidError: If the response is flat or turns at zero detuning
        """
        detuning = np.asarray(detuning, dtype=float)
        centre = detuning.size // 2
        wd = setup.drive.omega_d
        base = setup.with_drive(phi_m=setpoint.phi_m)
        batch = self.solver.steady_state_batch([base.with_omega_eff(wd + float(d)) for d in detuning])
        valid = np.asarray(batch.valid)
        magnitude = np.abs(np.asarray(batch.harmonics.alpha_c))
        response = np.where(valid, (magnitude - setpoint.magnitude) / setpoint.alpha_c_max, np.nan)
        steps = np.diff(response)

        below, above = steps[centre - 1], steps[centre]
        if not (abs(below) > NOISE_FLOOR and abs(above) > NOISE_FLOOR and np.sign(below) == np.sign(above)):
            raise SetpointInvalidError(
                f"response is not monotonic at zero detuning (steps {below:.3e}, {above:.3e})"
            )
        sign = np.sign(above)

        upper = centre
        while upper < steps.size and sign * steps[upper] > NOISE_FLOOR:
            upper += 1
        lower = centre
        while lower > 0 and sign * steps[lower - 1] > NOISE_FLOOR:
            lower -= 1

        slope = float((response[centre + 1] - response[centre - 1]) / (detuning[centre + 1] - detuning[centre - 1]))
        region = MonotonicRegion(float(detuning[lower]), float(detuning[upper]), slope)
        logger.info(
            "monotonic region [%.4g, %.4g] rad/s, slope %.4g per rad/s", region.lower, region.upper, region.slope
        )
        return region

    def run_experiment(self, spec: ExperimentSpec) -> DataProduct:
        """
        Dispatch ``spec`` and attach the resolved physical parameters.

        Raises:
            PhysicsError: From single-point experiments; sweeps flag failing cells instead
        """
        runners: Dict[str, Callable[[ExperimentSpec], DataProduct]] = {
            "derive": self._derive,
            "classical": self._classical,
            "response-map": self._response_map,
            "noise-spectrum": self._noise_spectrum,
            "variance-detuning": self._variance_detuning,
            "variance-drive": self._variance_drive,
        }
        logger.info("running experiment %s", spec.experiment)
        product = runners[spec.experiment](spec)
        return product.with_provenance(
            experiment=spec.experiment, setup=setup_parameters(spec.setup), overrides=dict(spec.overrides)
        )

    def _derive(self, spec: ExperimentSpec) -> DataProduct:
        setup = spec.setup
        dq = derive_quantities(setup.with_omega_eff(None))
        shift = frequency_shift(setup.system, dq.F2)
        rows = [
            ("x_zpf", dq.x_zpf, "m"),
            ("F1", dq.F1, "N"),
            ("F2", dq.F2, "N/m"),
            ("omega_eff", dq.omega_eff, "rad/s"),
        ]
        payload = pd.DataFrame(rows, columns=["quantity", "value", "unit"])
        return DataProduct(
            kind="table",
            name=spec.experiment,
            columns=[Column("quantity", "-"), Column("value", "per unit column"), Column("unit", "-")],
            payload=payload,
            metadata={
                "h_m": setup.tip.h,
                "frequency_shift_rad_s": shift,
                "frequency_shift_hz": shift / (2.0 * math.pi),
                "omega_eff_hz": dq.omega_eff / (2.0 * math.pi),
            },
        )

    def _classical(self, spec: ExperimentSpec) -> DataProduct:
        setup = spec.setup
        state = self.solver.steady_state(setup)
        h = state.harmonics
        rows = []
        for name in ("alpha_minus", "alpha_c", "alpha_plus", "beta_0", "beta_1"):
            value = complex(getattr(h, name))
            rows.append((name, value.real, value.imag, abs(value), math.atan2(value.imag, value.real)))
        payload = pd.DataFrame(rows, columns=["coefficient", "real", "imag", "abs", "arg"])
        sp = setup.system
        # the predicate sees the shifted detuning, so a compensated pump counts as undetuned
        effective = replace(setup.drive, delta_pump=float(state.delta_tilde))
        return DataProduct(
            kind="table",
            name=spec.experiment,
            columns=[
                Column("coefficient", "-"),
                Column("real", "sqrt(quanta)"),
                Column("imag", "sqrt(quanta)"),
                Column("abs", "sqrt(quanta)"),
                Column("arg", "rad"),
            ],
            payload=payload,
            metadata={
                "omega_d_rad_s": state.omega_d,
                "omega_eff_rad_s": float(state.omega_eff),
                "delta_pump_rad_s": float(state.delta_pump),
                "delta_tilde_rad_s": float(state.delta_tilde),
                "windows": state.windows,
                "ansatz_residual": float(h.residual),
                "linearization_ratio": float(h.linearization_ratio(sp.g0, sp.kappa)),
                "resolved_sideband": sp.resolved_sideband,
                "backaction_evading": effective.is_backaction_evading(float(state.omega_eff)),
                "measurement_rate_minus_rad_s": measurement_rate(sp.g0, complex(h.alpha_minus), sp.kappa),
                "measurement_rate_plus_rad_s": measurement_rate(sp.g0, complex(h.alpha_plus), sp.kappa),
            },
        )

    def _response_map(self, spec: ExperimentSpec) -> DataProduct:
        grids = spec.grids
        setpoint = self.find_setpoint(spec.setup, grids.setpoint_points)
        metadata: Dict[str, Any] = {"setpoint": asdict(setpoint)}
        try:
            region = self.monotonic_region(spec.setup, setpoint, grids.monotonic_detuning)
            metadata["monotonic_region"] = {**asdict(region), "width_over_gamma": region.width / spec.setup.system.gamma}
        except PhysicsError as exc:
            logger.warning("no monotonic region: %s", exc)
            metadata["monotonic_region"] = {"error": str(exc)}

        rmap = self.solver.response_map(
            grids.phi_m, grids.response_values, spec.setup, setpoint.magnitude, grids.response_axis
        )
        phi, col = np.meshgrid(rmap.phi_grid, np.arange(rmap.axis_grid.size), indexing="ij")
        payload = pd.DataFrame(
            {
                "phi_m": phi.ravel(),
                "omega_eff": rmap.omega_eff[col.ravel()],
                "h": rmap.h[col.ravel()],
                "alpha_c_abs": rmap.alpha_c_abs.ravel(),
                "response": rmap.response.ravel(),
                "valid": rmap.valid.ravel(),
            }
        )
        metadata.update(alpha_c_max=rmap.alpha_c_max, invalid_cells=rmap.messages)
        return DataProduct(
            kind="matrix",
            name=spec.experiment,
            columns=[
                Column("phi_m", "rad"),
                Column("omega_eff", "rad/s"),
                Column("h", "m"),
                Column("alpha_c_abs", "sqrt(photons)"),
                Column("response", "1"),
                Column("valid", "bool"),
            ],
            payload=payload,
            axes={"phi_m": rmap.phi_grid.tolist(), rmap.axis: rmap.axis_grid.tolist()},
            metadata=metadata,
        )

    def _noise_spectrum(self, spec: ExperimentSpec) -> DataProduct:
        pairs = self.noise_service.noise_spectra(spec.grids.spectrum_beta1, spec.setup, spec.grids.spectrum)
        frames = [
            pd.DataFrame(
                {
                    "beta1": np.full(p.full.freq_grid.size, p.beta1_target),
                    "omega": p.full.freq_grid,
                    "full": p.full.values,
                    "reduced": p.reduced.values,
                }
            )
            for p in pairs
        ]
        return DataProduct(
            kind="table",
            name=spec.experiment,
            columns=[
                Column("beta1", "1"),
                Column("omega", "rad/s"),
                Column("full", "1/(rad/s)"),
                Column("reduced", "1/(rad/s)"),
            ],
            payload=pd.concat(frames, ignore_index=True),
            metadata={
                "spectra": [
                    {
                        "beta1_target": p.beta1_target,
                        "beta1_abs": p.beta1_abs,
                        "imag_residue_full": p.full.imag_residue,
                        "imag_residue_reduced": p.reduced.imag_residue,
                    }
                    for p in pairs
                ]
            },
        )

    def _variance_detuning(self, spec: ExperimentSpec) -> DataProduct:
        points = self.noise_service.variance_vs_detuning(spec.grids.detuning, spec.setup)
        gamma = spec.setup.system.gamma
        payload = _variance_frame(points)
        payload.insert(1, "detuning_over_gamma", payload["parameter"] / gamma)
        payload = payload.rename(columns={"parameter": "detuning"})
        columns = [Column("detuning", "rad/s"), Column("detuning_over_gamma", "1"), *_VARIANCE_COLUMNS]
        return self._variance_product(spec, payload, columns, points)

    def _variance_drive(self, spec: ExperimentSpec) -> DataProduct:
        points = self.noise_service.variance_vs_drive(spec.grids.beta1, spec.setup)
        payload = _variance_frame(points).rename(columns={"parameter": "beta1_target"})
        columns = [Column("beta1_target", "1"), *_VARIANCE_COLUMNS]
        return self._variance_product(spec, payload, columns, points)

    @staticmethod
    def _variance_product(
        spec: ExperimentSpec, payload: pd.DataFrame, columns: List[Column], points: List[VariancePoint]
    ) -> DataProduct:
        valid = [p.variance for p in points if p.valid]
        return DataProduct(
            kind="table",
            name=spec.experiment,
            columns=columns,
            payload=payload,
            metadata={
                "invalid_points": sum(not p.valid for p in points),
                "min_variance": min(valid) if valid else None,
            },
        )


_VARIANCE_COLUMNS = [
    Column("omega_eff", "rad/s"),
    Column("beta1_abs", "1"),
    Column("linearization", "1"),
    Column("variance", "1"),
    Column("valid", "bool"),
    Column("message", "-"),
]


def _variance_frame(points: List[VariancePoint]) -> pd.DataFrame:
    return pd.DataFrame(
        [asdict(p) for p in points],
        columns=["parameter", "omega_eff", "beta1_abs", "linearization", "variance", "valid", "message"],
    )


def setup_parameters(setup: DeviceSetup) -> Dict[str, Any]:
    """Resolved SI parameters of ``setup``, with complex values as [re, im] pairs."""

    def plain(value: Any) -> Any:
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        if isinstance(value, complex):
            return [value.real, value.imag]
        return value

    return plain(asdict(setup))

"""
Controllers for the application layer.

They adapt a resolved configuration document into domain objects, run the
requested experiment and hand the product to the repository.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, TypedDict

import numpy as np

from optoforce.domain.data_product import DataProduct, OutputTarget
from optoforce.domain.errors import OptoforceError
from optoforce.domain.experiment_service import ExperimentGrids, ExperimentService, ExperimentSpec
from optoforce.domain.floquet import spectrum_grid
from optoforce.domain.harmonic_balance import drive_for_amplitude
from optoforce.domain.models import DeviceSetup, DriveConfig, SystemParams, TipSurface
from optoforce.domain.repositories import DataProductRepository
from optoforce.domain.tip_surface import effective_frequency, vdw_force_terms

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class SystemDocument(TypedDict):
    omega_c_hz: float
    omega_m_hz: float
    kappa_hz: float
    gamma_hz: float
    m_eff_kg: float
    g0_hz: float


class TipDocument(TypedDict):
    hamaker_j: float
    r_tip_m: float
    h_m: float


class PumpDocument(TypedDict):
    magnitude: float
    phase_rad: float


class DriveDocument(TypedDict):
    a_in_minus: PumpDocument
    a_in_plus: PumpDocument
    delta_hz: float | Literal["compensate"]
    beta_in_mag: float | Literal["auto"]
    target_beta1: float
    phi_m_rad: float
    omega_d_hz: float | Literal["resonant"]


class GridsDocument(TypedDict):
    phi_points: int
    response_axis: str
    response_points: int
    response_span_gamma: float
    h_min_m: float
    h_max_m: float
    setpoint_points: int
    monotonic_points: int
    monotonic_span_gamma: float
    detuning_points: int
    detuning_span_gamma: float
    beta1_values: List[float]
    spectrum_beta1: List[float]
    spectrum_span: float
    spectrum_points: int


class SimulationDocument(TypedDict, total=False):
    """Resolved configuration as plain data; every section carries every key."""

    system: SystemDocument
    tip: TipDocument
    drive: DriveDocument
    noise: Dict[str, Any]
    integrator: Dict[str, Any]
    grids: GridsDocument


@dataclass
class ExperimentController:
    """
    Controller responsible for running one experiment per invocation.
    """

    experiment_service: ExperimentService
    repository: DataProductRepository
    version: str = "0"

    @staticmethod
    def _map_setup(document: SimulationDocument) -> DeviceSetup:
        """
        Map the configuration onto a DeviceSetup in SI units and rad/s.

        Resolves ``omega_d_hz = "resonant"`` to ω_eff at the configured
        distance, ``beta_in_mag = "auto"`` to the drive reaching
        ``target_beta1`` and ``delta_hz = "compensate"`` to a compensated
        detuning.

        Raises:
            SnapToContactError: If ω_eff is needed and the tip is past snap-to-contact
        """
        s, t, d = document["system"], document["tip"], document["drive"]
        system = SystemParams(
            omega_c=TWO_PI * s["omega_c_hz"],
            omega_m=TWO_PI * s["omega_m_hz"],
            kappa=TWO_PI * s["kappa_hz"],
            gamma=TWO_PI * s["gamma_hz"],
            m_eff=s["m_eff_kg"],
            g0=TWO_PI * s["g0_hz"],
        )
        tip = TipSurface.from_hamaker(t["hamaker_j"], t["r_tip_m"], t["h_m"])

        symbolic = d["omega_d_hz"] == "resonant" or d["beta_in_mag"] == "auto"
        omega_eff = effective_frequency(system, vdw_force_terms(tip)[1]) if symbolic else math.nan
        omega_d = omega_eff if d["omega_d_hz"] == "resonant" else TWO_PI * float(d["omega_d_hz"])
        if d["beta_in_mag"] == "auto":
            beta_in_mag = drive_for_amplitude(d["target_beta1"], omega_eff, omega_d, system.gamma)
        else:
            beta_in_mag = float(d["beta_in_mag"])
        compensate = d["delta_hz"] == "compensate"

        drive = DriveConfig(
            a_in_minus=cmath.rect(d["a_in_minus"]["magnitude"], d["a_in_minus"]["phase_rad"]),
            a_in_plus=cmath.rect(d["a_in_plus"]["magnitude"], d["a_in_plus"]["phase_rad"]),
            delta_pump=0.0 if compensate else TWO_PI * float(d["delta_hz"]),
            beta_in_mag=beta_in_mag,
            phi_m=d["phi_m_rad"],
            omega_d=omega_d,
        )
        logger.debug("mapped setup: omega_d = %.9e rad/s, |beta_in| = %.6e", omega_d, beta_in_mag)
        return DeviceSetup(system=system, tip=tip, drive=drive, compensate_detuning=compensate)

    @staticmethod
    def _map_grids(document: SimulationDocument, setup: DeviceSetup, command: str) -> ExperimentGrids:
        """Sweep grids in SI units from the ``grids`` section."""
        g = document["grids"]
        gamma, wd = setup.system.gamma, setup.drive.omega_d

        def symmetric(span_gamma: float, points: int) -> np.ndarray:
            return np.linspace(-span_gamma * gamma, span_gamma * gamma, points)

        if g["response_axis"] == "h":
            response_values = np.linspace(g["h_min_m"], g["h_max_m"], g["response_points"])
        else:
            response_values = wd + symmetric(g["response_span_gamma"], g["response_points"])

        spectrum = None
        if command == "noise-spectrum":
            omega_eff = effective_frequency(setup.system, vdw_force_terms(setup.tip)[1])
            spectrum = spectrum_grid(wd, omega_eff, gamma, span=g["spectrum_span"], points=g["spectrum_points"])

        return ExperimentGrids(
            phi_m=TWO_PI * np.arange(g["phi_points"]) / g["phi_points"],
            response_axis=g["response_axis"],
            response_values=response_values,
            setpoint_points=g["setpoint_points"],
            monotonic_detuning=symmetric(g["monotonic_span_gamma"], g["monotonic_points"]),
            detuning=symmetric(g["detuning_span_gamma"], g["detuning_points"]),
            beta1=np.asarray(g["beta1_values"], dtype=float),
            spectrum_beta1=np.asarray(g["spectrum_beta1"], dtype=float),
            spectrum=spectrum,
        )

    def build_spec(
        self, command: str, document: SimulationDocument, overrides: Optional[Mapping[str, Any]] = None
    ) -> ExperimentSpec:
        setup = self._map_setup(document)
        grids = self._map_grids(document, setup, command)
        return ExperimentSpec(experiment=command, setup=setup, grids=grids, overrides=dict(overrides or {}))

    def run(
        self,
        command: str,
        document: SimulationDocument,
        target: OutputTarget,
        overrides: Optional[Mapping[str, Any]] = None,
        timestamp: bool = True,
    ) -> Optional[Path]:
        """
        Entry point for every CLI command.

        Args:
            command: Experiment id
            document: Resolved configuration, embedded verbatim as provenance
            target: Output path and format
            overrides: Parsed ``--set`` overrides, for provenance
            timestamp: Whether to stamp the product with the current time

        Returns:
            Path of the written data file, or None for standard output
        """
        logger.info("Running %s", command)
        try:
            spec = self.build_spec(command, document, overrides)
            product = self.experiment_service.run_experiment(spec)
            product = self._stamp(product, document, timestamp)
            path = self.repository.save(product, target)
        except OptoforceError as e:
            logger.error("%s failed: %s", command, e)
            raise
        except Exception as e:
            logger.error("Unexpected error while running %s: %s", command, e, exc_info=True)
            raise
        logger.info("Finished %s", command)
        return path

    def _stamp(self, product: DataProduct, document: SimulationDocument, timestamp: bool) -> DataProduct:
        entries: Dict[str, Any] = {"tool": "optoforce", "version": self.version, "config": document}
        if timestamp:
            entries["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return product.with_provenance(**entries)


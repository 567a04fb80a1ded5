"""
Dependency injection container for optoforce.

Uses `dependency_injector` to wire domain, application, and infra layers.
The loaded SimulationConfig and the thread count are supplied at runtime
by overriding ``simulation_config`` and ``max_workers``.
"""

from __future__ import annotations

from dependency_injector import containers, providers

from optoforce import __version__
from optoforce.application.controllers import ExperimentController
from optoforce.domain.classical_service import ClassicalSolver
from optoforce.domain.experiment_service import ExperimentService
from optoforce.domain.noise_service import NoiseService
from optoforce.infra.config import SimulationConfig, integrator_config, noise_config
from optoforce.infra.data_product_writer import FileDataProductRepository


class DI(containers.DeclarativeContainer):
    """
    DI container defining how components are constructed and wired together.
    """

    # Configuration
    simulation_config = providers.Dependency(instance_of=SimulationConfig)
    max_workers = providers.Object(1)

    integrator = providers.Callable(integrator_config, simulation_config)
    noise = providers.Callable(noise_config, simulation_config)

    # Domain services
    classical_solver = providers.Factory(
        ClassicalSolver,
        integrator=integrator,
        max_workers=max_workers,
    )

    noise_service = providers.Factory(
        NoiseService,
        solver=classical_solver,
        noise=noise,
        linearity_threshold=simulation_config.provided.noise.linearity_threshold,
    )

    experiment_service = providers.Factory(
        ExperimentService,
        solver=classical_solver,
        noise_service=noise_service,
    )

    # Infra: data product repository
    repository = providers.Factory(FileDataProductRepository)

    # Application controllers
    experiment_controller = providers.Factory(
        ExperimentController,
        experiment_service=experiment_service,
        repository=repository,
        version=__version__,
    )


def build_container(config: SimulationConfig, threads: int = 1) -> DI:
    """Container bound to ``config`` with sweeps spread over ``threads`` workers."""
    container = DI()
    container.simulation_config.override(providers.Object(config))
    container.max_workers.override(providers.Object(max(1, threads)))
    return container

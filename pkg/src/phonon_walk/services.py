"""Service wiring: every derived physics object is a lazy factory on a ``svcs.Registry``.

A command registers its ``Scenario`` and asks the container for what it
needs; each object is built at most once per container.

Examples:
    >>> from phonon_walk.scenario import default_scenario
    >>> container = scenario_container(default_scenario())
    >>> container.get(HoppingMatrix).n_ions
    4
"""

import logging

import svcs

from phonon_walk.coupling import HoppingMatrix, hopping_matrix
from phonon_walk.crystal import IonChain, TrapConfig, equilibrium_positions
from phonon_walk.dynamics import MeasurementModel, ModeBasis, mode_decomposition
from phonon_walk.scenario import Scenario

logger = logging.getLogger(__name__)


def _trap_config(svcs_container: svcs.Container) -> TrapConfig:
    return svcs_container.get(Scenario).trap_config()


def _ion_chain(svcs_container: svcs.Container) -> IonChain:
    chain = equilibrium_positions(svcs_container.get(TrapConfig))
    logger.debug("equilibrium positions for %d ions ready", chain.n_ions)
    return chain


def _hopping_matrix(svcs_container: svcs.Container) -> HoppingMatrix:
    chain, config = svcs_container.get(IonChain, TrapConfig)
    return hopping_matrix(chain, config)


def _mode_basis(svcs_container: svcs.Container) -> ModeBasis:
    return mode_decomposition(svcs_container.get(HoppingMatrix))


def _measurement_model(svcs_container: svcs.Container) -> MeasurementModel:
    return svcs_container.get(Scenario).measurement_model()


def build_registry(scenario: Scenario) -> svcs.Registry:
    registry = svcs.Registry()
    registry.register_value(Scenario, scenario)
    registry.register_factory(TrapConfig, _trap_config)
    registry.register_factory(IonChain, _ion_chain)
    registry.register_factory(HoppingMatrix, _hopping_matrix)
    registry.register_factory(ModeBasis, _mode_basis)
    registry.register_factory(MeasurementModel, _measurement_model)
    return registry


def scenario_container(scenario: Scenario) -> svcs.Container:
    return svcs.Container(build_registry(scenario))

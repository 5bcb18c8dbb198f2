"""Shared fixtures: four ⁴⁰Ca⁺ ions at (3.1, 2.9, 0.09) MHz."""

import numpy as np
import pytest

from phonon_walk import (
    HoppingMatrix,
    IonChain,
    ModeBasis,
    PropagationTrace,
    TrapConfig,
    equilibrium_positions,
    hopping_matrix,
    mode_decomposition,
    propagate,
)

DT = 12.5e-6
N_STEPS = 800


@pytest.fixture(scope="session")
def calcium_config() -> TrapConfig:
    return TrapConfig.from_lab_units()


@pytest.fixture(scope="session")
def calcium_chain(calcium_config: TrapConfig) -> IonChain:
    return equilibrium_positions(calcium_config)


@pytest.fixture(scope="session")
def calcium_hopping(calcium_chain: IonChain, calcium_config: TrapConfig) -> HoppingMatrix:
    return hopping_matrix(calcium_chain, calcium_config)


@pytest.fixture(scope="session")
def calcium_basis(calcium_hopping: HoppingMatrix) -> ModeBasis:
    return mode_decomposition(calcium_hopping)


@pytest.fixture(scope="session")
def sample_times() -> np.ndarray:
    """800 steps of 12.5 μs: a 10 ms record."""
    return np.arange(N_STEPS) * DT


@pytest.fixture(scope="session")
def calcium_trace(calcium_basis: ModeBasis, sample_times: np.ndarray) -> PropagationTrace:
    """Ideal walk started on ion 2."""
    return propagate(calcium_basis, 2, sample_times)

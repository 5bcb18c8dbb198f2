"""
Free-threaded Python compatibility tests.

Uses pytest-run-parallel to call the physics entry points from many threads
at once. Run with: uv run pytest tests/test_free_threading.py --parallel-threads=8

Shared state under test:
- cached dimensionless chains and chain shapes
- read-only arrays on frozen records
- one svcs container per thread, none shared
"""

import numpy as np
import pytest

from phonon_walk import (
    MeasurementModel,
    analytic_spectrum,
    apply_measurement_model,
    chain_shape,
    default_scenario,
    mode_decomposition,
    propagate,
)
from phonon_walk.coupling import HoppingMatrix
from phonon_walk.crystal import dimensionless_chain
from phonon_walk.dynamics import ModeBasis
from phonon_walk.services import scenario_container

TIMES = np.arange(200) * 12.5e-6


@pytest.mark.parallel_threads_limit(8)
@pytest.mark.iterations(20)
def test_dimensionless_chain_cache_returns_independent_copies():
    """Test each thread gets its own copy of a cached chain."""
    u = dimensionless_chain(6)
    u[0] = 0.0
    assert dimensionless_chain(6)[0] < 0.0


@pytest.mark.parallel_threads_limit(8)
@pytest.mark.iterations(10)
def test_container_per_thread():
    """Test a container per thread builds and reuses its own services."""
    container = scenario_container(default_scenario())
    hopping = container.get(HoppingMatrix)
    assert container.get(HoppingMatrix) is hopping
    basis = container.get(ModeBasis)
    np.testing.assert_allclose(
        basis.b @ np.diag(basis.omega) @ basis.b.T, hopping.h, atol=1e-9 * hopping.kappa0
    )


@pytest.mark.parallel_threads_limit(8)
@pytest.mark.iterations(10)
def test_propagate_conserves_probability():
    """Test propagation from many threads."""
    basis = mode_decomposition(scenario_container(default_scenario()).get(HoppingMatrix))
    trace = propagate(basis, 2, TIMES)
    np.testing.assert_allclose(trace.p.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parallel_threads_limit(8)
@pytest.mark.iterations(10)
def test_measurement_model_is_deterministic_across_threads():
    """Threaded sampling gives the serial counts."""
    basis = scenario_container(default_scenario()).get(ModeBasis)
    trace = propagate(basis, 2, TIMES)
    model = MeasurementModel(scale=0.66, t_offset=50e-6, heating_rate=5.0, shots=50, seed=5)
    serial = apply_measurement_model(trace, model)
    threaded = apply_measurement_model(trace, model, workers=3)
    np.testing.assert_array_equal(serial.counts, threaded.counts)


@pytest.mark.parallel_threads_limit(8)
@pytest.mark.iterations(20)
def test_chain_shape_and_lines_are_stable():
    """Test cached chain shapes and spectra under concurrent use."""
    shape = chain_shape(4)
    assert shape.n_ions == 4
    basis = scenario_container(default_scenario()).get(ModeBasis)
    lines = analytic_spectrum(basis, 2, 3).lines
    assert len(lines) == 6

"""Tests for least-squares recovery of trap and measurement parameters."""

import math
import statistics

import numpy as np
import pytest

from phonon_walk import (
    DegenerateDataError,
    DomainError,
    FitBounds,
    FitOptions,
    FitParameters,
    HoppingMatrix,
    MeasurementModel,
    ModeBasis,
    ObservationDataset,
    PropagationTrace,
    apply_measurement_model,
    chain_shape,
    fit_observation,
    linear_parameters,
    noiseless_observation,
    propagate,
    residual_sum_squares,
)
from phonon_walk.fitting import golden_section, model_populations

TRUE_SCALE = 0.66
TRUE_OFFSET = 50e-6
TRUE_HEATING = 5.0


def _model(seed: int = 1000) -> MeasurementModel:
    return MeasurementModel(
        scale=TRUE_SCALE, t_offset=TRUE_OFFSET, heating_rate=TRUE_HEATING, shots=50, seed=seed
    )


@pytest.fixture(scope="module")
def truth(calcium_hopping: HoppingMatrix) -> FitParameters:
    return FitParameters(calcium_hopping.kappa0, TRUE_OFFSET, TRUE_SCALE, TRUE_HEATING)


@pytest.fixture(scope="module")
def noisy(calcium_trace: PropagationTrace) -> ObservationDataset:
    return apply_measurement_model(calcium_trace, _model())


@pytest.fixture(scope="module")
def noiseless(calcium_trace: PropagationTrace) -> ObservationDataset:
    return noiseless_observation(calcium_trace, _model())


def test_chain_shape_matches_physical_modes(calcium_hopping, calcium_basis: ModeBasis):
    """Test the cached shape reproduces the calcium mode frequencies."""
    shape = chain_shape(4)
    np.testing.assert_allclose(
        shape.lam * calcium_hopping.kappa0 / 2, calcium_basis.omega, rtol=1e-9, atol=1e-6
    )
    assert shape.spread > 0
    assert chain_shape(4) is shape


def test_model_matches_measurement_expectation(calcium_trace, truth):
    """Test the fit model against the measurement model at the true parameters."""
    expected = model_populations(chain_shape(4), truth, calcium_trace.times, 2)
    scaled = TRUE_SCALE * propagate(
        calcium_trace.basis, 2, calcium_trace.times - TRUE_OFFSET
    ).p + (TRUE_HEATING * calcium_trace.times / 4)[:, None]
    np.testing.assert_allclose(expected, scaled, atol=1e-12)


def test_linear_parameters_solve_the_normal_equations(noisy, truth):
    """Test scale and heating against a dense least-squares solve."""
    shape = chain_shape(4)
    scale, heating = linear_parameters(noisy, shape, truth.kappa0, truth.t_offset)
    ideal = model_populations(
        shape, FitParameters(truth.kappa0, truth.t_offset, 1.0, 0.0), noisy.times, 2
    )
    background = np.broadcast_to((noisy.times / 4)[:, None], ideal.shape)
    design = np.column_stack([ideal.ravel(), background.ravel()])
    expected, *_ = np.linalg.lstsq(design, noisy.populations.ravel(), rcond=None)
    assert scale == pytest.approx(expected[0], rel=1e-10)
    assert heating == pytest.approx(expected[1], rel=1e-10)


def test_linear_parameters_respect_bounds(noiseless, truth):
    """Test the linear solve clips to its bounds."""
    bounds = FitBounds.default().with_interval("scale", 0.2, 0.5)
    scale, heating = linear_parameters(
        noiseless, chain_shape(4), truth.kappa0, truth.t_offset, bounds
    )
    assert scale == 0.5
    assert 0.0 <= heating <= 50.0


def test_noiseless_rss_vanishes_at_truth(noiseless, truth):
    """Noiseless data has no residual at the true parameters."""
    assert residual_sum_squares(noiseless, truth, chain_shape(4)) < 1e-15


def test_rss_at_truth_matches_binomial_variance(calcium_trace, truth):
    """Test the mean residual at truth is the binomial variance."""
    shape = chain_shape(4)
    q = model_populations(shape, truth, calcium_trace.times, 2)
    expected = float(np.sum(q * (1 - q)) / 50)
    values = [
        residual_sum_squares(apply_measurement_model(calcium_trace, _model(seed)), truth, shape)
        for seed in range(50)
    ]
    assert statistics.fmean(values) == pytest.approx(expected, rel=0.02)


def test_rss_grows_away_from_truth(noisy, truth):
    """Test a 5% error in κ₀ raises the residual."""
    shape = chain_shape(4)
    at_truth = residual_sum_squares(noisy, truth, shape)
    for factor in (0.95, 1.05):
        detuned = FitParameters(truth.kappa0 * factor, *truth.as_array()[1:])
        assert residual_sum_squares(noisy, detuned, shape) > at_truth


def test_rss_outside_bounds_is_rejected(noisy, truth):
    """Test out-of-bounds parameters and a mismatched chain shape."""
    shape = chain_shape(4)
    with pytest.raises(DomainError, match="bounds"):
        residual_sum_squares(noisy, FitParameters(truth.kappa0, 1e-3, 0.5, 1.0), shape)
    with pytest.raises(DomainError, match="ions"):
        residual_sum_squares(noisy, truth, chain_shape(3))


def test_noiseless_fit_recovers_every_parameter(noiseless, truth):
    """Test all four parameters come back from noiseless data."""
    result = fit_observation(noiseless)
    assert result.converged
    assert result.at_bounds == ()
    for name, value in zip(("kappa0", "t_offset", "scale", "heating_rate"), truth.as_array()):
        assert getattr(result, name) == pytest.approx(value, rel=1e-4), name


def test_closed_loop_fit(noisy, truth):
    """Test recovery from 50-shot data within the stated tolerances."""
    result = fit_observation(noisy)
    assert result.converged
    assert result.kappa0 == pytest.approx(truth.kappa0, rel=0.01)
    assert result.scale == pytest.approx(TRUE_SCALE, abs=0.05)
    assert result.t_offset == pytest.approx(TRUE_OFFSET, abs=15e-6)
    assert result.heating_rate == pytest.approx(TRUE_HEATING, abs=3.0)
    assert result.rss <= result.grid_rss + 1e-9
    assert result.rss <= residual_sum_squares(noisy, truth, chain_shape(4)) + 1e-9
    assert result.n_evals > 0
    assert result.sweeps >= 1


def test_fit_is_deterministic(noisy):
    """The same dataset always gives the same fit."""
    assert fit_observation(noisy) == fit_observation(noisy)


def test_threaded_grid_gives_the_same_fit(calcium_basis):
    """Test a threaded grid search against the serial one."""
    trace = propagate(calcium_basis, 2, np.arange(200) * 12.5e-6)
    dataset = apply_measurement_model(trace, _model(3))
    serial = fit_observation(dataset)
    threaded = fit_observation(dataset, options=FitOptions(workers=4))
    assert serial == threaded


def test_narrow_scale_bounds_pin_the_fit(noisy):
    """Test a scale pinned at its upper bound is reported."""
    bounds = FitBounds.default().with_interval("scale", 0.2, 0.5)
    result = fit_observation(noisy, bounds)
    assert "scale" in result.at_bounds
    assert result.scale == pytest.approx(0.5, abs=1e-6)


def test_single_ion_data_cannot_be_fitted():
    """One ion carries no information about κ₀."""
    times = np.arange(400) * 12.5e-6
    dataset = ObservationDataset(
        times=times, counts=np.full((400, 1), 40), shots=50, source=1
    )
    with pytest.raises(DegenerateDataError):
        fit_observation(dataset)


def test_fit_rejects_non_uniform_times(noisy):
    """Test a non-uniform time grid."""
    times = np.array(noisy.times)
    times[5] += 1e-6
    broken = ObservationDataset(times=times, counts=noisy.counts, shots=50, source=2)
    with pytest.raises(DomainError, match="uniform"):
        fit_observation(broken)


@pytest.mark.slow
@pytest.mark.timeout(600)
def test_closed_loop_over_many_seeds(calcium_trace, truth):
    """Test at least 90 of 100 seeds meet every tolerance."""
    errors = []
    passed = 0
    for seed in range(100):
        result = fit_observation(apply_measurement_model(calcium_trace, _model(1000 + seed)))
        error = abs(result.kappa0 / truth.kappa0 - 1)
        errors.append(error)
        passed += (
            error < 0.01
            and abs(result.scale - TRUE_SCALE) < 0.05
            and abs(result.t_offset - TRUE_OFFSET) < 15e-6
            and abs(result.heating_rate - TRUE_HEATING) < 3.0
        )
    assert passed >= 90
    assert statistics.median(errors) < 0.005


def test_golden_section_finds_a_parabola_minimum():
    """Test the minimum and the evaluation count on a parabola."""
    x, fx, evals = golden_section(lambda v: (v - 1.3) ** 2 + 2.0, 0.0, 4.0, tol=1e-8)
    assert x == pytest.approx(1.3, abs=2e-8)
    assert fx == pytest.approx(2.0, abs=1e-15)
    expected = math.ceil(math.log(1e-8 / 4.0) / math.log((math.sqrt(5) - 1) / 2)) + 1
    assert evals == expected


def test_golden_section_on_a_tiny_interval():
    """An interval below the tolerance costs one evaluation."""
    x, fx, evals = golden_section(abs, -1e-9, 1e-9, tol=1e-6)
    assert (x, fx, evals) == (0.0, 0.0, 1)


@pytest.mark.parametrize(
    "changes",
    [
        {"kappa0": (2.0, 1.0)},
        {"kappa0": (0.0, 1.0)},
        {"scale": (-0.1, 1.0)},
        {"heating_rate": (0.0, math.inf)},
    ],
)
def test_fit_bounds_validation(changes):
    """Test inverted, non-positive and infinite intervals."""
    fields = {
        "kappa0": (1.0, 2.0),
        "t_offset": (0.0, 1e-4),
        "scale": (0.2, 1.2),
        "heating_rate": (0.0, 50.0),
    }
    with pytest.raises(DomainError):
        FitBounds(**(fields | changes))


def test_fit_bounds_helpers(truth):
    """Test the default intervals and narrowing one of them."""
    bounds = FitBounds.default()
    assert bounds.kappa0 == pytest.approx((2 * math.pi * 1e3, 2 * math.pi * 1e4))
    assert bounds.contains(truth)
    narrowed = bounds.with_interval("t_offset", 0.0, 10e-6)
    assert narrowed.t_offset == (0.0, 10e-6)
    assert not narrowed.contains(truth)
    assert narrowed.as_array().shape == (4, 2)
    with pytest.raises(DomainError):
        bounds.with_interval("omega", 0.0, 1.0)  # type: ignore[arg-type]


def test_fit_options_validation():
    """Test invalid search options."""
    with pytest.raises(DomainError):
        FitOptions(phase_step=0.0)
    with pytest.raises(DomainError):
        FitOptions(beam_width=0)

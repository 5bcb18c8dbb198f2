"""phonon-walk: quantum walks of a local phonon in a trapped-ion chain."""

from phonon_walk.errors import (
    ConvergenceError,
    DegenerateDataError,
    DegenerateInputError,
    DomainError,
    FormatError,
    PhononWalkError,
)
from phonon_walk.types import (
    FloatArray,
    IntArray,
    ModePair,
    PopulationSeries,
    Site,
    WindowName,
)
from phonon_walk.crystal import (
    IonChain,
    TrapConfig,
    dimensionless_potential,
    equilibrium_positions,
    potential_gradient,
    potential_hessian,
)
from phonon_walk.coupling import (
    HoppingMatrix,
    WalkGenerator,
    edge_rates,
    hopping_amplitude,
    hopping_matrix,
    kappa0,
    max_adjacent_hopping_time,
    normalized_hopping_matrix,
    to_walk_generator,
)
from phonon_walk.dynamics import (
    MeasurementModel,
    ModeBasis,
    ObservationDataset,
    PropagationTrace,
    apply_measurement_model,
    expected_populations,
    mode_decomposition,
    mode_parity,
    noiseless_observation,
    ode_oracle,
    propagate,
)
from phonon_walk.spectral import (
    AnalyticSpectrum,
    DftSpectrum,
    MatchReport,
    PeakMatch,
    SpectrumLine,
    analytic_spectrum,
    dft_trace,
    match_peaks,
)
from phonon_walk.fitting import (
    FitBounds,
    FitOptions,
    FitParameters,
    FitResult,
    chain_shape,
    fit_observation,
    linear_parameters,
    residual_sum_squares,
)
from phonon_walk.scenario import Scenario, default_scenario, load_scenario

__all__ = [
    "ConvergenceError",
    "DegenerateDataError",
    "DegenerateInputError",
    "DomainError",
    "FormatError",
    "PhononWalkError",
    "FloatArray",
    "IntArray",
    "ModePair",
    "PopulationSeries",
    "Site",
    "WindowName",
    # geometry and couplings
    "IonChain",
    "TrapConfig",
    "dimensionless_potential",
    "equilibrium_positions",
    "potential_gradient",
    "potential_hessian",
    "HoppingMatrix",
    "WalkGenerator",
    "edge_rates",
    "hopping_amplitude",
    "hopping_matrix",
    "kappa0",
    "max_adjacent_hopping_time",
    "normalized_hopping_matrix",
    "to_walk_generator",
    # dynamics and measurement
    "MeasurementModel",
    "ModeBasis",
    "ObservationDataset",
    "PropagationTrace",
    "apply_measurement_model",
    "expected_populations",
    "mode_decomposition",
    "mode_parity",
    "noiseless_observation",
    "ode_oracle",
    "propagate",
    # spectra and fits
    "AnalyticSpectrum",
    "DftSpectrum",
    "MatchReport",
    "PeakMatch",
    "SpectrumLine",
    "analytic_spectrum",
    "dft_trace",
    "match_peaks",
    "FitBounds",
    "FitOptions",
    "FitParameters",
    "FitResult",
    "chain_shape",
    "fit_observation",
    "linear_parameters",
    "residual_sum_squares",
    "Scenario",
    "default_scenario",
    "load_scenario",
]

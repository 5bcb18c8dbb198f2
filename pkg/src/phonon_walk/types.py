"""Public type aliases and protocols for phonon-walk."""

from typing import Literal, Protocol, runtime_checkable

import numpy as np
from numpy.typing import NDArray

type FloatArray = NDArray[np.float64]
"""Real-valued numpy array."""

type IntArray = NDArray[np.int64]
"""Integer numpy array, used for shot counts."""

type Site = int
"""1-based ion index, counted from the left end of the chain."""

type ModePair = tuple[int, int]
"""1-based collective-mode indices (p, q) with p < q."""

type WindowName = Literal["rect", "hann"]
"""DFT window applied before transforming a population series."""

type SweepParameter = Literal["omega_y", "omega_z", "n_ions"]
"""Scenario quantity a sweep varies."""

type FitParameterName = Literal["kappa0", "t_offset", "scale", "heating_rate"]
"""Name of one of the four fitted scalars."""

type Interval = tuple[float, float]
"""Closed interval (lo, hi)."""


@runtime_checkable
class PopulationSeries(Protocol):
    """Anything that samples site populations on a time grid."""

    @property
    def times(self) -> FloatArray:
        """Sample times in seconds, shape (T,)."""
        ...

    @property
    def populations(self) -> FloatArray:
        """Site populations, shape (T, N)."""
        ...

"""Single-phonon hopping Hamiltonian for the radial y direction.

In the frame rotating at ω_y and restricted to one phonon, the Hamiltonian
is ``Σ_n ω_{y,n} |n⟩⟨n| − Σ_{n≠m} t_nm |n⟩⟨m|`` with hopping amplitudes
``t_nm = −e²/(8πε₀ M ω_y |z_n − z_m|³)`` and harmonic corrections
``ω_{y,n} = Σ_{m≠n} t_nm``. The matrix is stored literally in that sign
convention: positive off-diagonal entries, negative diagonal, rad/s.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from phonon_walk.crystal import (
    COULOMB_E2,
    IonChain,
    TrapConfig,
    central_gap_u,
    dimensionless_chain,
)
from phonon_walk.errors import DomainError
from phonon_walk.types import FloatArray, Site

SYMMETRY_TOLERANCE = 1e-12


def check_site(site: Site, n_ions: int) -> int:
    """Zero-based index of a 1-based ``site``; DomainError outside ``1..n_ions``."""
    if isinstance(site, bool) or not isinstance(site, (int, np.integer)):
        msg = f"site must be an integer, got {site!r}"
        raise DomainError(msg)
    if not 1 <= site <= n_ions:
        msg = f"site {site} outside 1..{n_ions}"
        raise DomainError(msg)
    return int(site) - 1


def _check_dimensions(chain: IonChain, config: TrapConfig) -> None:
    if chain.n_ions != config.n_ions:
        msg = f"chain has {chain.n_ions} ions but the trap config has {config.n_ions}"
        raise DomainError(msg)


@dataclass(frozen=True, eq=False)
class HoppingMatrix:
    """N×N single-phonon Hamiltonian in rad/s plus its κ₀ normalization.

    ``kappa0`` is 0 for a single ion, where no pair defines it.
    """

    h: FloatArray
    kappa0: float
    n_ions: int = field(init=False)

    def __post_init__(self) -> None:
        h = np.array(self.h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] == 0:
            msg = f"hopping matrix must be square and non-empty, got shape {h.shape}"
            raise DomainError(msg)
        scale = max(float(np.max(np.abs(h))), np.finfo(float).tiny)
        if np.max(np.abs(h - h.T)) > SYMMETRY_TOLERANCE * scale:
            msg = "hopping matrix is not symmetric"
            raise DomainError(msg)
        if not math.isfinite(self.kappa0) or self.kappa0 < 0:
            msg = f"kappa0 must be finite and non-negative, got {self.kappa0!r}"
            raise DomainError(msg)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "n_ions", h.shape[0])

    @property
    def normalized(self) -> FloatArray:
        """Matrix in units of κ₀/2; entries depend only on the number of ions."""
        if self.kappa0 == 0.0:
            msg = "a single-ion matrix has no kappa0 normalization"
            raise DomainError(msg)
        return self.h / (0.5 * self.kappa0)

    def scaled(self, kappa0: float) -> "HoppingMatrix":
        """Same shape, rescaled so that its κ₀ equals ``kappa0``."""
        return HoppingMatrix(h=self.normalized * (0.5 * kappa0), kappa0=kappa0)


@dataclass(frozen=True, eq=False)
class WalkGenerator:
    """Continuous-time quantum-walk generator ``M`` and its edge rates ``γ``."""

    m: FloatArray
    gamma: dict[tuple[Site, Site], float]


def hopping_amplitude(chain: IonChain, config: TrapConfig, n: Site, m: Site) -> float:
    """t_nm in rad/s between ions ``n`` and ``m``; always negative."""
    _check_dimensions(chain, config)
    i = check_site(n, config.n_ions)
    j = check_site(m, config.n_ions)
    if i == j:
        msg = f"hopping amplitude needs two distinct ions, got {n} twice"
        raise DomainError(msg)
    distance = abs(float(chain.z0[i] - chain.z0[j]))
    return -0.5 * COULOMB_E2 / (config.mass * config.omega_y * distance**3)


def kappa0(chain: IonChain, config: TrapConfig) -> float:
    """Hopping rate between the central two ions, ``e²/(4πε₀ M ω_y d₀³)``."""
    _check_dimensions(chain, config)
    if config.n_ions < 2:
        msg = "kappa0 needs at least two ions"
        raise DomainError(msg)
    d0 = chain.central_gap
    return COULOMB_E2 / (config.mass * config.omega_y * d0**3)


def hopping_matrix(chain: IonChain, config: TrapConfig) -> HoppingMatrix:
    """Build the rotating-frame Hamiltonian for ``chain`` in ``config``."""
    _check_dimensions(chain, config)
    if config.n_ions == 1:
        return HoppingMatrix(h=np.zeros((1, 1)), kappa0=0.0)
    distance = np.abs(chain.z0[:, None] - chain.z0[None, :])
    np.fill_diagonal(distance, np.inf)
    t = -0.5 * COULOMB_E2 / (config.mass * config.omega_y * distance**3)
    h = -t
    np.fill_diagonal(h, t.sum(axis=1))
    return HoppingMatrix(h=h, kappa0=kappa0(chain, config))


@lru_cache(maxsize=64)
def _normalized_shape(n_ions: int) -> tuple[tuple[float, ...], ...]:
    u = dimensionless_chain(n_ions)
    if n_ions == 1:
        return ((0.0,),)
    gap = central_gap_u(u)
    distance = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(distance, np.inf)
    shape = (gap / distance) ** 3
    np.fill_diagonal(shape, -shape.sum(axis=1))
    return tuple(tuple(float(x) for x in row) for row in shape)


def normalized_hopping_matrix(n_ions: int) -> FloatArray:
    """h/(κ₀/2) for ``n_ions`` ions; independent of mass and trap frequencies."""
    if n_ions < 1:
        msg = f"n_ions must be at least 1, got {n_ions}"
        raise DomainError(msg)
    return np.array(_normalized_shape(n_ions))


def edge_rates(h: HoppingMatrix) -> dict[tuple[Site, Site], float]:
    """Hopping rate ``γ_nm`` in rad/s for every pair n < m, keyed by 1-based sites."""
    return {
        (i + 1, j + 1): float(h.h[i, j])
        for i in range(h.n_ions)
        for j in range(i + 1, h.n_ions)
    }


def to_walk_generator(h: HoppingMatrix) -> WalkGenerator:
    """Express ``h`` as a quantum-walk generator with rates ``γ_nm = −t_nm``.

    ``M`` is ``−h``: off-diagonal ``−γ_nm ≤ 0`` and diagonal ``Σ_l γ_nl``, so
    every row sums to zero and the probabilities generated by ``M`` and ``h``
    agree.
    """
    m = -np.array(h.h)
    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, -m.sum(axis=1))
    m.setflags(write=False)
    return WalkGenerator(m=m, gamma=edge_rates(h))


def max_adjacent_hopping_time(h: HoppingMatrix) -> float:
    """Longest time, in seconds, for a phonon to hop between adjacent ions.

    For the weakest adjacent coupling ``J`` in rad/s this is ``π/(2J)``, the
    ``(c·κ₀/2π)⁻¹/2`` construction with ``c = J/(κ₀/2)``.
    """
    if h.n_ions < 2:
        msg = "adjacent hopping needs at least two ions"
        raise DomainError(msg)
    weakest = float(np.min(np.abs(np.diagonal(h.h, offset=1))))
    return math.pi / (2.0 * weakest)

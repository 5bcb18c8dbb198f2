"""Equilibrium geometry of a linear ion chain in a harmonic axial trap.

Positions are found in units of the length scale
``ℓ = (e²/(4πε₀ M ω_z²))^(1/3)``, where the potential energy reads
``V(u) = Σ u_n²/2 + Σ_{m>n} 1/|u_n − u_m|``. The dimensionless solution
depends only on the number of ions and is cached per N.

Example:
    >>> chain = equilibrium_positions(TrapConfig.from_lab_units(n_ions=2))
    >>> round(float(chain.u[1]), 5)
    0.62996
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from collections.abc import Sequence

import numpy as np
import scipy.linalg

from phonon_walk.errors import ConvergenceError, DegenerateInputError, DomainError
from phonon_walk.types import FloatArray

logger = logging.getLogger(__name__)

COULOMB_E2 = 2.30708e-28
"""e²/(4πε₀) in J·m, fixed to six significant digits."""

ATOMIC_MASS_UNIT = 1.66054e-27
"""Atomic mass unit in kg, fixed to six significant digits."""

MAX_ITERATIONS = 10_000
GRADIENT_TOLERANCE = 1e-12
ACCEPTED_GRADIENT = 1e-10


def mhz_to_rad_s(value: float) -> float:
    """Convert an ordinary frequency in MHz to an angular frequency in rad/s."""
    return 2.0 * math.pi * value * 1e6


@dataclass(frozen=True, slots=True)
class TrapConfig:
    """Ion species and secular frequencies: the ground truth of a scenario.

    ``omega_x`` is carried for completeness; only the y direction is modelled.
    """

    n_ions: int
    mass: float
    omega_y: float
    omega_z: float
    omega_x: float

    def __post_init__(self) -> None:
        if isinstance(self.n_ions, bool) or not isinstance(self.n_ions, int):
            msg = f"n_ions must be an integer, got {self.n_ions!r}"
            raise DomainError(msg)
        if self.n_ions < 1:
            msg = f"n_ions must be at least 1, got {self.n_ions}"
            raise DomainError(msg)
        for name in ("mass", "omega_y", "omega_z", "omega_x"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                msg = f"{name} must be positive and finite, got {value!r}"
                raise DomainError(msg)
        if self.omega_z >= self.omega_y:
            msg = (
                f"omega_z ({self.omega_z:.6g} rad/s) must be below omega_y "
                f"({self.omega_y:.6g} rad/s) for a linear crystal"
            )
            raise DomainError(msg)

    @classmethod
    def from_lab_units(
        cls,
        n_ions: int = 4,
        mass_amu: float = 40.0,
        omega_y_mhz: float = 2.9,
        omega_z_mhz: float = 0.09,
        omega_x_mhz: float = 3.1,
    ) -> "TrapConfig":
        """Build a config from MHz frequencies and a mass in atomic units.

        The defaults are four ⁴⁰Ca⁺ ions at (3.1, 2.9, 0.09) MHz.
        """
        return cls(
            n_ions=n_ions,
            mass=mass_amu * ATOMIC_MASS_UNIT,
            omega_y=mhz_to_rad_s(omega_y_mhz),
            omega_z=mhz_to_rad_s(omega_z_mhz),
            omega_x=mhz_to_rad_s(omega_x_mhz),
        )

    @property
    def length_scale(self) -> float:
        """ℓ in meters."""
        return (COULOMB_E2 / (self.mass * self.omega_z**2)) ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class IonChain:
    """Equilibrium axial positions, dimensionless (``u``) and in meters (``z0``)."""

    length_scale: float
    u: FloatArray
    z0: FloatArray = field(init=False)

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.float64)
        u.setflags(write=False)
        z0 = self.length_scale * u
        z0.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "z0", z0)

    @property
    def n_ions(self) -> int:
        return len(self.u)

    @cached_property
    def gaps(self) -> FloatArray:
        """Adjacent distances in meters, ``N − 1`` entries."""
        return np.diff(self.z0)

    @property
    def central_gap(self) -> float:
        """d₀ in meters: the middle gap, or for odd N the mean of the two central gaps."""
        return self.length_scale * central_gap_u(self.u)


def central_gap_u(u: FloatArray) -> float:
    """Dimensionless central distance of a chain."""
    n = len(u)
    if n < 2:
        msg = "a single ion has no central gap"
        raise DomainError(msg)
    gaps = np.diff(u)
    if n % 2 == 0:
        return float(gaps[n // 2 - 1])
    return float(0.5 * (gaps[n // 2 - 1] + gaps[n // 2]))


def _separations(u: Sequence[float] | FloatArray) -> FloatArray:
    positions = np.asarray(u, dtype=np.float64)
    if positions.ndim != 1 or positions.size == 0:
        msg = "positions must be a non-empty 1-D sequence"
        raise DomainError(msg)
    diff = positions[:, None] - positions[None, :]
    off_diagonal = ~np.eye(positions.size, dtype=bool)
    if np.any(diff[off_diagonal] == 0.0):
        msg = "two ions share a position"
        raise DegenerateInputError(msg)
    return diff


def dimensionless_potential(u: Sequence[float] | FloatArray) -> float:
    """Trap plus Coulomb energy of a chain in units of the length scale.

    Example:
        >>> dimensionless_potential([-1.0, 1.0])
        1.5
        >>> dimensionless_potential([0.0])
        0.0
    """
    diff = _separations(u)
    positions = np.asarray(u, dtype=np.float64)
    upper = np.triu_indices(len(positions), k=1)
    coulomb = np.sum(1.0 / np.abs(diff[upper]))
    return float(0.5 * np.sum(positions**2) + coulomb)


def potential_gradient(u: Sequence[float] | FloatArray) -> FloatArray:
    """Gradient of ``dimensionless_potential``.

    Component n is ``u_n − Σ_{m<n} 1/(u_n−u_m)² + Σ_{m>n} 1/(u_m−u_n)²``
    for an ascending chain.
    """
    diff = _separations(u)
    positions = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        pull = np.where(diff != 0.0, np.sign(diff) / diff**2, 0.0)
    return positions - pull.sum(axis=1)


def potential_hessian(u: Sequence[float] | FloatArray) -> FloatArray:
    """Hessian of ``dimensionless_potential``; positive definite for any ordered chain."""
    diff = _separations(u)
    with np.errstate(divide="ignore"):
        coupling = np.where(diff != 0.0, 2.0 / np.abs(diff) ** 3, 0.0)
    hessian = -coupling
    hessian[np.diag_indices_from(hessian)] = 1.0 + coupling.sum(axis=1)
    return hessian


def initial_guess(n_ions: int) -> FloatArray:
    """Uniform seed of half-width ``1.1·N^0.56/2``."""
    if n_ions == 1:
        return np.zeros(1)
    half_width = 1.1 * n_ions**0.56 / 2.0
    return np.linspace(-half_width, half_width, n_ions)


def _newton_direction(u: FloatArray, gradient: FloatArray) -> FloatArray:
    try:
        step = scipy.linalg.solve(potential_hessian(u), -gradient, assume_a="pos")
    except (np.linalg.LinAlgError, ValueError):
        logger.debug("Hessian solve failed, falling back to gradient descent")
        return -gradient
    if not np.all(np.isfinite(step)) or float(step @ gradient) >= 0.0:
        return -gradient
    return step


def _is_ordered(u: FloatArray) -> bool:
    return bool(np.all(np.diff(u) > 0.0))


def _minimize(n_ions: int) -> tuple[FloatArray, int]:
    u = initial_guess(n_ions)
    gradient = potential_gradient(u)
    norm = float(np.linalg.norm(gradient))
    iteration = 0
    while norm >= GRADIENT_TOLERANCE and iteration < MAX_ITERATIONS:
        iteration += 1
        direction = _newton_direction(u, gradient)
        alpha = 1.0
        while alpha > 1e-12:
            candidate = u + alpha * direction
            if _is_ordered(candidate):
                candidate_gradient = potential_gradient(candidate)
                candidate_norm = float(np.linalg.norm(candidate_gradient))
                if candidate_norm < norm:
                    break
            alpha *= 0.5
        else:
            # Roundoff floor: no step lowers the residual any further.
            break
        u, gradient, norm = candidate, candidate_gradient, candidate_norm
    logger.debug(
        "chain of %d ions: %d iterations, gradient norm %.3e", n_ions, iteration, norm
    )
    return u, iteration


@lru_cache(maxsize=64)
def _dimensionless_chain(n_ions: int) -> tuple[float, ...]:
    u, iterations = _minimize(n_ions)
    # Enforce the mirror symmetry the exact solution has.
    u = 0.5 * (u - u[::-1])
    norm = float(np.linalg.norm(potential_gradient(u)))
    if norm >= ACCEPTED_GRADIENT:
        msg = f"equilibrium search for {n_ions} ions stalled at gradient norm {norm:.3e}"
        raise ConvergenceError(msg, residual=norm, iterations=iterations)
    return tuple(float(x) for x in u)


def dimensionless_chain(n_ions: int) -> FloatArray:
    """Equilibrium ``u`` for ``n_ions`` ions, ascending and mirror symmetric."""
    if n_ions < 1:
        msg = f"n_ions must be at least 1, got {n_ions}"
        raise DomainError(msg)
    return np.array(_dimensionless_chain(n_ions))


def equilibrium_positions(config: TrapConfig) -> IonChain:
    """Minimize the trap-plus-Coulomb energy for the ions described by ``config``."""
    return IonChain(
        length_scale=config.length_scale, u=dimensionless_chain(config.n_ions)
    )

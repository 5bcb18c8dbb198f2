"""Propagation of one local phonon and synthetic measurements of it.

The ideal walk is evaluated in the collective-mode basis,
``P_nm(t) = |Σ_p b_n^(p) b_m^(p) e^{−iω_p t}|²``. A fixed-step Runge-Kutta
integrator of ``iψ' = hψ`` serves as an independent check. Measured data
adds a population scale factor, a time offset, a site-uniform heating
background and binomial shot noise.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from phonon_walk.coupling import HoppingMatrix, check_site
from phonon_walk.errors import DomainError
from phonon_walk.types import FloatArray, IntArray, Site

logger = logging.getLogger(__name__)

UNIFORM_GRID_RTOL = 1e-9
ODE_STEP_LIMIT = 0.01
CLAMP_WARNING = 0.05
DEGENERACY_RTOL = 1e-9


def uniform_step(times: FloatArray) -> float:
    """Step of a uniform time grid; DomainError when the grid is not uniform."""
    grid = np.asarray(times, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        msg = "a uniform grid needs at least two samples"
        raise DomainError(msg)
    steps = np.diff(grid)
    dt = float(steps[0])
    if dt <= 0 or np.max(np.abs(steps - dt)) > UNIFORM_GRID_RTOL * max(
        dt, float(np.max(np.abs(grid)))
    ):
        msg = "time grid is not uniform"
        raise DomainError(msg)
    return dt


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Collective-mode frequencies ``omega`` (rad/s, ascending) and eigenvectors ``b``.

    Column p of ``b`` holds the amplitudes ``b_n^(p)`` over ions n.
    """

    omega: FloatArray
    b: FloatArray

    def __post_init__(self) -> None:
        for name in ("omega", "b"):
            value = np.array(getattr(self, name), dtype=np.float64)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_ions(self) -> int:
        return self.b.shape[0]

    def weights(self, source: Site) -> FloatArray:
        """``b_n^(p) b_m^(p)`` for fixed source n, shape (P, N)."""
        n = check_site(source, self.n_ions)
        return self.b[n, :][:, None] * self.b.T


@dataclass(frozen=True, eq=False)
class PropagationTrace:
    """Probabilities ``p[t, m]`` of finding the phonon at ion m+1 after starting at ``source``.

    ``basis`` is set when the trace came from ``propagate``, which lets the
    measurement model re-evaluate it at shifted times.
    """

    times: FloatArray
    p: FloatArray
    source: Site
    basis: ModeBasis | None = None

    def __post_init__(self) -> None:
        for name in ("times", "p"):
            value = np.array(getattr(self, name), dtype=np.float64)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def populations(self) -> FloatArray:
        return self.p

    @property
    def n_ions(self) -> int:
        return self.p.shape[1]


@dataclass(frozen=True, slots=True)
class MeasurementModel:
    """How a measured population differs from the ideal walk."""

    scale: float = 1.0
    t_offset: float = 0.0
    heating_rate: float = 0.0
    shots: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.scale <= 1.0:
            msg = f"scale must lie in (0, 1], got {self.scale!r}"
            raise DomainError(msg)
        if not math.isfinite(self.t_offset):
            msg = f"t_offset must be finite, got {self.t_offset!r}"
            raise DomainError(msg)
        if not self.heating_rate >= 0.0 or not math.isfinite(self.heating_rate):
            msg = f"heating_rate must be non-negative, got {self.heating_rate!r}"
            raise DomainError(msg)
        if isinstance(self.shots, bool) or not isinstance(self.shots, int):
            msg = f"shots must be an integer, got {self.shots!r}"
            raise DomainError(msg)
        if self.shots < 1:
            msg = f"shots must be at least 1, got {self.shots}"
            raise DomainError(msg)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            msg = f"seed must be a non-negative integer, got {self.seed!r}"
            raise DomainError(msg)


@dataclass(frozen=True, eq=False)
class ObservationDataset:
    """Shot counts ``counts[t, m]`` out of ``shots`` on a uniform time grid."""

    times: FloatArray
    counts: IntArray
    shots: int
    source: Site
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=np.float64)
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != times.shape[0]:
            msg = f"counts shape {counts.shape} does not match {times.shape[0]} times"
            raise DomainError(msg)
        if self.shots < 1:
            msg = f"shots must be at least 1, got {self.shots}"
            raise DomainError(msg)
        if np.any(counts < 0) or np.any(counts > self.shots):
            msg = f"counts must lie between 0 and {self.shots}"
            raise DomainError(msg)
        check_site(self.source, counts.shape[1])
        times.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def populations(self) -> FloatArray:
        return self.counts / self.shots

    @property
    def n_ions(self) -> int:
        return self.counts.shape[1]

    @property
    def dt(self) -> float:
        return uniform_step(self.times)


def _mirror(n: int) -> FloatArray:
    return np.eye(n)[::-1]


def _order_degenerate(omega: FloatArray, b: FloatArray) -> FloatArray:
    """Within each cluster of equal frequencies, pick mirror-parity eigenvectors, even first."""
    tolerance = DEGENERACY_RTOL * max(1.0, float(np.max(np.abs(omega))))
    start = 0
    while start < len(omega):
        stop = start + 1
        while stop < len(omega) and omega[stop] - omega[start] <= tolerance:
            stop += 1
        if stop - start > 1:
            block = b[:, start:stop]
            _, rotation = scipy.linalg.eigh(block.T @ _mirror(len(b)) @ block)
            b[:, start:stop] = block @ rotation[:, ::-1]
        start = stop
    return b


def _fix_signs(b: FloatArray) -> FloatArray:
    for p in range(b.shape[1]):
        nonzero = np.flatnonzero(np.abs(b[:, p]) > 1e-10)
        if nonzero.size and b[nonzero[0], p] < 0:
            b[:, p] = -b[:, p]
    return b


def mode_decomposition(h: HoppingMatrix) -> ModeBasis:
    """Collective modes of ``h``: ascending frequencies, orthonormal real eigenvectors.

    Each eigenvector's first non-zero component is positive.
    """
    omega, b = scipy.linalg.eigh(h.h)
    b = _fix_signs(_order_degenerate(omega, np.array(b)))
    return ModeBasis(omega=omega, b=b)


def mode_parity(basis: ModeBasis) -> tuple[int, ...]:
    """Mirror parity of every mode: +1 even, −1 odd."""
    overlap = np.einsum("np,np->p", basis.b, basis.b[::-1, :])
    return tuple(1 if x > 0 else -1 for x in overlap)


def propagate(basis: ModeBasis, source: Site, times: FloatArray) -> PropagationTrace:
    """Probabilities over all ions at ``times`` for a phonon started at ``source``."""
    grid = np.asarray(times, dtype=np.float64)
    if not np.all(np.isfinite(grid)):
        msg = "times must be finite"
        raise DomainError(msg)
    phases = np.exp(-1j * np.outer(grid, basis.omega))
    amplitudes = phases @ basis.weights(source)
    return PropagationTrace(
        times=grid, p=np.abs(amplitudes) ** 2, source=source, basis=basis
    )


def ode_oracle(
    h: HoppingMatrix,
    source: Site,
    t_end: float,
    dt: float,
    *,
    sample_every: int = 1,
) -> PropagationTrace:
    """Integrate ``iψ' = hψ`` with classical fourth-order Runge-Kutta steps of ``dt``.

    Every ``sample_every``-th state, starting with t = 0, is kept.
    """
    n = check_site(source, h.n_ions)
    if dt <= 0 or h.kappa0 * dt >= ODE_STEP_LIMIT:
        msg = f"step {dt!r} s too large: kappa0*dt must stay below {ODE_STEP_LIMIT}"
        raise DomainError(msg)
    if sample_every < 1:
        msg = f"sample_every must be at least 1, got {sample_every}"
        raise DomainError(msg)
    n_steps = int(round(t_end / dt))
    generator = -1j * dt * h.h
    psi = np.zeros(h.n_ions, dtype=np.complex128)
    psi[n] = 1.0
    samples = [np.abs(psi) ** 2]
    for step in range(1, n_steps + 1):
        k1 = generator @ psi
        k2 = generator @ (psi + 0.5 * k1)
        k3 = generator @ (psi + 0.5 * k2)
        k4 = generator @ (psi + k3)
        psi = psi + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if step % sample_every == 0:
            samples.append(np.abs(psi) ** 2)
    times = np.arange(len(samples)) * (dt * sample_every)
    return PropagationTrace(times=times, p=np.array(samples), source=source)


def expected_populations(
    trace: PropagationTrace, model: MeasurementModel
) -> tuple[FloatArray, float]:
    """Clamped expected populations and the largest excursion outside [0, 1]."""
    uniform_step(trace.times)
    if model.t_offset == 0.0:
        ideal = trace.p
    elif trace.basis is None:
        msg = "a time offset needs a trace computed from a mode basis"
        raise DomainError(msg)
    else:
        ideal = propagate(trace.basis, trace.source, trace.times - model.t_offset).p
    background = model.heating_rate * trace.times / trace.n_ions
    q = model.scale * ideal + background[:, None]
    excursion = float(max(np.max(q) - 1.0, -np.min(q), 0.0))
    return np.clip(q, 0.0, 1.0), excursion


def _sample_rows(
    q: FloatArray, shots: int, seeds: list[np.random.SeedSequence]
) -> IntArray:
    rows = [
        np.random.default_rng(seed).binomial(shots, row) for seed, row in zip(seeds, q)
    ]
    return np.array(rows, dtype=np.int64).reshape(q.shape)


def _metadata(trace: PropagationTrace, model: MeasurementModel, **extra: Any) -> dict[str, str]:
    metadata = {
        "source": str(trace.source),
        "n_ions": str(trace.n_ions),
        "dt_s": repr(uniform_step(trace.times)),
        "scale": repr(model.scale),
        "t_offset_s": repr(model.t_offset),
        "heating_rate": repr(model.heating_rate),
        "shots": str(model.shots),
        "seed": str(model.seed),
    }
    metadata.update({key: str(value) for key, value in extra.items()})
    return metadata


def apply_measurement_model(
    trace: PropagationTrace,
    model: MeasurementModel,
    *,
    workers: int | None = None,
) -> ObservationDataset:
    """Draw shot counts for every time step and ion.

    The generator for time step k is child k of ``SeedSequence(model.seed)``,
    so the dataset is the same whether steps are sampled serially or across
    ``workers`` threads.
    """
    q, excursion = expected_populations(trace, model)
    violated = excursion > CLAMP_WARNING
    if violated:
        logger.warning(
            "expected population leaves [0, 1] by %.3f; the heating model is outside its regime",
            excursion,
        )
    seeds = np.random.SeedSequence(model.seed).spawn(len(q))
    if workers is None or workers <= 1:
        counts = _sample_rows(q, model.shots, seeds)
    else:
        bounds = np.linspace(0, len(q), workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(
                lambda lo, hi: _sample_rows(q[lo:hi], model.shots, seeds[lo:hi]),
                bounds[:-1],
                bounds[1:],
            )
            counts = np.concatenate(list(chunks), axis=0)
    return ObservationDataset(
        times=trace.times,
        counts=counts,
        shots=model.shots,
        source=trace.source,
        metadata=_metadata(trace, model, regime_warning=str(violated).lower()),
    )


def noiseless_observation(
    trace: PropagationTrace, model: MeasurementModel, shots: int = 10**12
) -> ObservationDataset:
    """Counts equal to the rounded expectation, the large-shot limit of the model."""
    q, _ = expected_populations(trace, model)
    counts = np.rint(q * shots).astype(np.int64)
    return ObservationDataset(
        times=trace.times,
        counts=counts,
        shots=shots,
        source=trace.source,
        metadata=_metadata(trace, model, shots=shots),
    )

"""Least-squares recovery of κ₀, time offset, population scale and heating rate.

The hopping matrix in units of κ₀/2 depends only on the number of ions, so
its eigenpairs ``(λ_p, b^(p))`` are computed once and the model population
at any κ₀ is ``|Σ_p b_n^(p) b_m^(p) exp(−iλ_p κ₀ τ/2)|²`` with
``τ = t − t_offset``. Scale and heating enter linearly and are solved in
closed form wherever κ₀ and t_offset are fixed.

The search runs in two stages. A coarse grid over (κ₀, t_offset) starts on
a short prefix of the record, where the rss landscape in κ₀ is broad, and
keeps doubling the prefix while zooming in on the best local minima. Then
golden-section sweeps over each of the four parameters in turn polish the
best grid point on the full record.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from phonon_walk.coupling import HoppingMatrix, check_site, normalized_hopping_matrix
from phonon_walk.dynamics import ObservationDataset, mode_decomposition, uniform_step
from phonon_walk.errors import DegenerateDataError, DomainError
from phonon_walk.types import FitParameterName, FloatArray, Interval, Site

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0
FLAT_RSS_SPREAD = 1e-12
PARAMETER_NAMES: tuple[FitParameterName, ...] = (
    "kappa0",
    "t_offset",
    "scale",
    "heating_rate",
)


@dataclass(frozen=True, slots=True)
class FitParameters:
    """The four fitted scalars: κ₀ in rad/s, offset in s, scale, heating in quanta/s."""

    kappa0: float
    t_offset: float
    scale: float
    heating_rate: float

    def as_array(self) -> FloatArray:
        return np.array([self.kappa0, self.t_offset, self.scale, self.heating_rate])

    @classmethod
    def from_array(cls, values: FloatArray) -> "FitParameters":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True, slots=True)
class FitBounds:
    """Closed search interval for every fitted parameter."""

    kappa0: Interval
    t_offset: Interval
    scale: Interval
    heating_rate: Interval

    def __post_init__(self) -> None:
        for name in PARAMETER_NAMES:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                msg = f"bounds for {name} must satisfy lo < hi, got ({lo!r}, {hi!r})"
                raise DomainError(msg)
        if self.kappa0[0] <= 0:
            msg = f"kappa0 lower bound must be positive, got {self.kappa0[0]!r}"
            raise DomainError(msg)
        if self.scale[0] < 0 or self.heating_rate[0] < 0:
            msg = "scale and heating_rate bounds must be non-negative"
            raise DomainError(msg)

    @classmethod
    def default(cls) -> "FitBounds":
        """κ₀/2π in [1, 10] kHz, offset in [0, 200] μs, scale in [0.2, 1.2], heating in [0, 50]/s."""
        return cls(
            kappa0=(2.0 * math.pi * 1e3, 2.0 * math.pi * 1e4),
            t_offset=(0.0, 200e-6),
            scale=(0.2, 1.2),
            heating_rate=(0.0, 50.0),
        )

    def with_interval(self, name: FitParameterName, lo: float, hi: float) -> "FitBounds":
        if name not in PARAMETER_NAMES:
            msg = f"unknown fit parameter {name!r}"
            raise DomainError(msg)
        return replace(self, **{name: (float(lo), float(hi))})

    def as_array(self) -> FloatArray:
        """Shape (4, 2), rows in ``PARAMETER_NAMES`` order."""
        return np.array([getattr(self, name) for name in PARAMETER_NAMES], dtype=float)

    def contains(self, params: FitParameters) -> bool:
        return all(
            lo <= value <= hi
            for (lo, hi), value in zip(self.as_array(), params.as_array())
        )


@dataclass(frozen=True, slots=True)
class FitOptions:
    coarse_horizon: float = 1e-3
    phase_step: float = 0.25
    offset_points: int = 17
    beam_width: int = 3
    zoom_spacings: float = 3.0
    rel_tol: float = 1e-6
    max_sweeps: int = 400
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.coarse_horizon <= 0 or self.phase_step <= 0 or self.rel_tol <= 0:
            msg = "coarse_horizon, phase_step and rel_tol must be positive"
            raise DomainError(msg)
        if self.offset_points < 1 or self.beam_width < 1 or self.max_sweeps < 1:
            msg = "offset_points, beam_width and max_sweeps must be at least 1"
            raise DomainError(msg)


@dataclass(frozen=True, slots=True)
class FitResult:
    kappa0: float
    t_offset: float
    scale: float
    heating_rate: float
    rss: float
    n_evals: int
    converged: bool
    at_bounds: tuple[FitParameterName, ...] = ()
    grid_rss: float = math.nan
    sweeps: int = 0

    @property
    def params(self) -> FitParameters:
        return FitParameters(self.kappa0, self.t_offset, self.scale, self.heating_rate)


@dataclass(frozen=True, eq=False)
class ChainShape:
    """Eigenpairs of the κ₀/2-normalized hopping matrix of an ``n_ions`` chain."""

    n_ions: int
    lam: FloatArray
    b: FloatArray

    @property
    def spread(self) -> float:
        return float(self.lam[-1] - self.lam[0])

    def weights(self, source: Site) -> FloatArray:
        n = check_site(source, self.n_ions)
        return self.b[n, :][:, None] * self.b.T


@lru_cache(maxsize=32)
def chain_shape(n_ions: int) -> ChainShape:
    basis = mode_decomposition(
        HoppingMatrix(h=normalized_hopping_matrix(n_ions), kappa0=2.0)
    )
    return ChainShape(n_ions=n_ions, lam=basis.omega, b=basis.b)


def _ideal(shape: ChainShape, source: Site, kappa0: FloatArray, tau: FloatArray) -> FloatArray:
    """Ideal populations for every κ₀ in ``kappa0``, shape (K, T, N)."""
    phase = np.exp(
        -0.5j * kappa0[:, None, None] * tau[None, :, None] * shape.lam[None, None, :]
    )
    return np.abs(phase @ shape.weights(source)) ** 2


def model_populations(
    shape: ChainShape, params: FitParameters, times: FloatArray, source: Site
) -> FloatArray:
    """Clamped model population ``scale·P(t − t_offset) + heating·t/N`` at ``params``."""
    grid = np.asarray(times, dtype=np.float64)
    ideal = _ideal(shape, source, np.array([params.kappa0]), grid - params.t_offset)[0]
    background = params.heating_rate * grid / shape.n_ions
    return np.clip(params.scale * ideal + background[:, None], 0.0, 1.0)


def _check_shape(dataset: ObservationDataset, shape: ChainShape) -> None:
    if dataset.n_ions != shape.n_ions:
        msg = f"dataset has {dataset.n_ions} ions but the chain shape has {shape.n_ions}"
        raise DomainError(msg)


def _as_parameters(params: FitParameters | tuple[float, float, float, float]) -> FitParameters:
    return params if isinstance(params, FitParameters) else FitParameters(*params)


def residual_sum_squares(
    dataset: ObservationDataset,
    params: FitParameters | tuple[float, float, float, float],
    shape: ChainShape,
    bounds: FitBounds | None = None,
) -> float:
    """Σ over times and sites of ``(counts/shots − model)²``.

    ``params`` outside ``bounds`` (default ``FitBounds.default()``) is a DomainError.
    """
    _check_shape(dataset, shape)
    candidate = _as_parameters(params)
    if not (bounds or FitBounds.default()).contains(candidate):
        msg = f"parameters {candidate} outside the fit bounds"
        raise DomainError(msg)
    model = model_populations(shape, candidate, dataset.times, dataset.source)
    return float(np.sum((dataset.populations - model) ** 2))


@dataclass(frozen=True, slots=True)
class _Moments:
    """Sums that define rss(scale, heating) as a quadratic form; arrays over the grid."""

    s11: FloatArray
    s12: FloatArray
    s22: float
    s1y: FloatArray
    s2y: float
    syy: float

    def rss(self, scale: FloatArray, heating: FloatArray) -> FloatArray:
        return (
            self.syy
            - 2.0 * scale * self.s1y
            - 2.0 * heating * self.s2y
            + scale**2 * self.s11
            + 2.0 * scale * heating * self.s12
            + heating**2 * self.s22
        )


def _moments(ideal: FloatArray, background: FloatArray, y: FloatArray) -> _Moments:
    n_ions = y.shape[1]
    return _Moments(
        s11=np.sum(ideal**2, axis=(-2, -1)),
        s12=np.einsum("...tn,t->...", ideal, background),
        s22=float(n_ions * np.sum(background**2)),
        s1y=np.einsum("...tn,tn->...", ideal, y),
        s2y=float(background @ y.sum(axis=1)),
        syy=float(np.sum(y**2)),
    )


def _unconstrained(m: _Moments) -> tuple[FloatArray, FloatArray, FloatArray]:
    det = m.s11 * m.s22 - m.s12**2
    regular = det > 1e-12 * np.maximum(m.s11 * m.s22, np.finfo(float).tiny)
    safe = np.where(regular, det, 1.0)
    scale = np.where(
        regular, (m.s22 * m.s1y - m.s12 * m.s2y) / safe, m.s1y / np.maximum(m.s11, 1e-300)
    )
    heating = np.where(regular, (m.s11 * m.s2y - m.s12 * m.s1y) / safe, 0.0)
    return scale, heating, regular


def _solve_linear(
    m: _Moments, bounds: FitBounds | None
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Best (scale, heating) and the rss they reach, elementwise over the grid."""
    scale, heating, _ = _unconstrained(m)
    if bounds is None:
        return scale, heating, m.rss(scale, heating)
    (s_lo, s_hi), (h_lo, h_hi) = bounds.scale, bounds.heating_rate
    inside = (scale >= s_lo) & (scale <= s_hi) & (heating >= h_lo) & (heating <= h_hi)
    candidates = [(scale, heating, np.where(inside, m.rss(scale, heating), np.inf))]
    for s_edge in (s_lo, s_hi):
        s = np.full_like(scale, s_edge)
        h = np.clip((m.s2y - s * m.s12) / max(m.s22, 1e-300), h_lo, h_hi)
        candidates.append((s, h, m.rss(s, h)))
    for h_edge in (h_lo, h_hi):
        h = np.full_like(heating, h_edge)
        s = np.clip((m.s1y - h * m.s12) / np.maximum(m.s11, 1e-300), s_lo, s_hi)
        candidates.append((s, h, m.rss(s, h)))
    s_all = np.stack([c[0] for c in candidates])
    h_all = np.stack([c[1] for c in candidates])
    r_all = np.stack([c[2] for c in candidates])
    pick = np.argmin(r_all, axis=0)[None, ...]
    return (
        np.take_along_axis(s_all, pick, axis=0)[0],
        np.take_along_axis(h_all, pick, axis=0)[0],
        np.take_along_axis(r_all, pick, axis=0)[0],
    )


def linear_parameters(
    dataset: ObservationDataset,
    shape: ChainShape,
    kappa0: float,
    t_offset: float,
    bounds: FitBounds | None = None,
) -> tuple[float, float]:
    """Least-squares (scale, heating) for fixed κ₀ and offset, ignoring clamping.

    Without ``bounds`` the result solves the 2×2 normal equations; with
    ``bounds`` it is the optimum over the scale × heating box.
    """
    _check_shape(dataset, shape)
    times = dataset.times
    ideal = _ideal(shape, dataset.source, np.array([kappa0]), times - t_offset)
    moments = _moments(ideal, times / shape.n_ions, dataset.populations)
    scale, heating, _ = _solve_linear(moments, bounds)
    return float(scale[0]), float(heating[0])


def golden_section(
    f: Callable[[float], float], a: float, b: float, *, tol: float
) -> tuple[float, float, int]:
    """Minimize a unimodal ``f`` on [a, b] down to a bracket narrower than ``tol``.

    Returns the best point seen, its value and the number of evaluations.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x), 1
    steps = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    evals = 2
    for _ in range(steps - 1):
        if yc < yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
        evals += 1
    return (c, yc, evals) if yc < yd else (d, yd, evals)


@dataclass(frozen=True, slots=True)
class _GridPoint:
    params: FitParameters
    rss: float
    kappa_spacing: float
    offset_spacing: float
    n_evals: int


class _CoarseSearch:
    """Progressive-horizon grid over (κ₀, t_offset) for one dataset."""

    def __init__(
        self,
        dataset: ObservationDataset,
        shape: ChainShape,
        bounds: FitBounds,
        options: FitOptions,
    ) -> None:
        self.dataset = dataset
        self.shape = shape
        self.bounds = bounds
        self.options = options
        lo, hi = bounds.t_offset
        if options.offset_points == 1:
            self.offsets = np.array([0.5 * (lo + hi)])
            self.offset_spacing = hi - lo
        else:
            self.offsets = np.linspace(lo, hi, options.offset_points)
            self.offset_spacing = (hi - lo) / (options.offset_points - 1)

    def kappa_grid(self, lo: float, hi: float, horizon: float) -> tuple[FloatArray, float]:
        """Geometric grid fine enough that adjacent points differ in phase by ``phase_step`` at ``horizon``."""
        span = math.log(hi / lo)
        phase_per_log = hi * self.shape.spread * horizon / 2.0
        n = max(2, math.ceil(span * phase_per_log / self.options.phase_step) + 1)
        return np.geomspace(lo, hi, n), span / (n - 1)

    def grid_rss(self, kappa: FloatArray, horizon: float) -> tuple[FloatArray, FloatArray, FloatArray]:
        keep = self.dataset.times <= horizon * (1.0 + 1e-12)
        times = self.dataset.times[keep]
        y = self.dataset.populations[keep]
        background = times / self.shape.n_ions

        def one_offset(t_offset: float) -> tuple[FloatArray, FloatArray, FloatArray]:
            ideal = _ideal(self.shape, self.dataset.source, kappa, times - t_offset)
            return _solve_linear(_moments(ideal, background, y), self.bounds)

        workers = self.options.workers
        if workers is not None and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                columns = list(pool.map(one_offset, self.offsets))
        else:
            columns = [one_offset(t) for t in self.offsets]
        scale = np.stack([c[0] for c in columns], axis=1)
        heating = np.stack([c[1] for c in columns], axis=1)
        rss = np.stack([c[2] for c in columns], axis=1)
        return np.maximum(rss, 0.0), scale, heating

    def beam(self, profile: FloatArray) -> list[int]:
        """Indices of the ``beam_width`` lowest local minima of ``profile``."""
        left = np.concatenate([[np.inf], profile[:-1]])
        right = np.concatenate([profile[1:], [np.inf]])
        minima = np.flatnonzero((profile <= left) & (profile <= right))
        ranked = sorted(minima, key=lambda i: (profile[i], i))
        return [int(i) for i in ranked[: self.options.beam_width]]

    def zoom(self, centres: FloatArray, spacing: float, horizon: float) -> tuple[FloatArray, float]:
        k_lo, k_hi = self.bounds.kappa0
        width = self.options.zoom_spacings * spacing
        pieces = []
        new_spacing = spacing
        for centre in centres:
            lo = max(k_lo, centre * math.exp(-width))
            hi = min(k_hi, centre * math.exp(width))
            grid, new_spacing = self.kappa_grid(lo, hi, horizon)
            pieces.append(grid)
        return np.unique(np.concatenate(pieces)), new_spacing

    def run(self) -> _GridPoint:
        t_end = float(self.dataset.times[-1])
        horizon = min(self.options.coarse_horizon, t_end)
        kappa, spacing = self.kappa_grid(*self.bounds.kappa0, horizon)
        n_evals = 0
        first = True
        while True:
            rss, scale, heating = self.grid_rss(kappa, horizon)
            n_evals += rss.size
            if first and float(np.ptp(rss)) < FLAT_RSS_SPREAD:
                msg = (
                    f"rss varies by {float(np.ptp(rss)):.3g} over the coarse grid; "
                    "the data do not constrain kappa0 or t_offset"
                )
                raise DegenerateDataError(msg)
            first = False
            logger.debug(
                "coarse grid: horizon %.3g s, %d kappa0 x %d offsets, best rss %.6g",
                horizon,
                len(kappa),
                len(self.offsets),
                float(rss.min()),
            )
            if horizon >= t_end:
                break
            centres = kappa[self.beam(rss.min(axis=1))]
            horizon = min(2.0 * horizon, t_end)
            kappa, spacing = self.zoom(centres, spacing, horizon)
        # First occurrence in row-major order is the lexicographic minimum.
        i, j = np.unravel_index(int(np.argmin(rss)), rss.shape)
        params = FitParameters(
            kappa0=float(kappa[i]),
            t_offset=float(self.offsets[j]),
            scale=float(scale[i, j]),
            heating_rate=float(heating[i, j]),
        )
        return _GridPoint(params, float(rss[i, j]), spacing, self.offset_spacing, n_evals)


def _refine(
    objective: Callable[[FloatArray], float],
    start: _GridPoint,
    bounds: FitBounds,
    options: FitOptions,
) -> tuple[FloatArray, float, int, int, bool]:
    """Golden-section sweeps over each parameter in turn; a step is kept only if rss drops."""
    x = start.params.as_array()
    box = bounds.as_array()
    half_widths = np.array(
        [
            options.zoom_spacings * start.kappa_spacing * x[0],
            start.offset_spacing,
            0.05,
            2.0,
        ]
    )
    floors = np.array([box[0, 0], 1e-5, 1.0, 1.0])
    best = objective(x)
    n_evals = 1
    for sweep in range(1, options.max_sweeps + 1):
        before = x.copy()
        for i in range(len(x)):
            lo = max(box[i, 0], x[i] - half_widths[i])
            hi = min(box[i, 1], x[i] + half_widths[i])
            tol = 0.1 * options.rel_tol * max(abs(x[i]), floors[i])

            def along(value: float, i: int = i) -> float:
                trial = x.copy()
                trial[i] = value
                return objective(trial)

            value, rss, evals = golden_section(along, lo, hi, tol=tol)
            n_evals += evals
            if rss < best:
                x[i] = value
                best = rss
        change = np.abs(x - before) / np.maximum(np.abs(before), floors)
        if np.all(change < options.rel_tol):
            return x, best, n_evals, sweep, True
    return x, best, n_evals, options.max_sweeps, False


def _pinned(x: FloatArray, bounds: FitBounds) -> tuple[FitParameterName, ...]:
    box = bounds.as_array()
    margin = 1e-6 * (box[:, 1] - box[:, 0])
    pinned = (x <= box[:, 0] + margin) | (x >= box[:, 1] - margin)
    return tuple(name for name, flag in zip(PARAMETER_NAMES, pinned) if flag)


def fit_observation(
    dataset: ObservationDataset,
    bounds: FitBounds | None = None,
    options: FitOptions | None = None,
) -> FitResult:
    """Fit κ₀, t_offset, scale and heating rate to ``dataset`` by least squares.

    Deterministic for a given dataset. Raises DegenerateDataError when the
    coarse grid cannot tell candidates apart.
    """
    bounds = bounds or FitBounds.default()
    options = options or FitOptions()
    uniform_step(dataset.times)
    shape = chain_shape(dataset.n_ions)
    start = _CoarseSearch(dataset, shape, bounds, options).run()
    clamped_start = FitParameters.from_array(
        np.clip(start.params.as_array(), *bounds.as_array().T)
    )
    start = replace(start, params=clamped_start)

    def objective(x: FloatArray) -> float:
        params = FitParameters.from_array(x)
        model = model_populations(shape, params, dataset.times, dataset.source)
        return float(np.sum((dataset.populations - model) ** 2))

    x, rss, evals, sweeps, converged = _refine(objective, start, bounds, options)
    at_bounds = _pinned(x, bounds)
    if not converged:
        logger.warning("fit stopped after %d sweeps without converging", sweeps)
    if at_bounds:
        logger.warning("fit pinned to the bounds for %s", ", ".join(at_bounds))
    logger.debug("fit: %d evaluations, %d sweeps, rss %.6g", start.n_evals + evals, sweeps, rss)
    return FitResult(
        *(float(v) for v in x),
        rss=rss,
        n_evals=start.n_evals + evals,
        converged=converged,
        at_bounds=at_bounds,
        grid_rss=start.rss,
        sweeps=sweeps,
    )

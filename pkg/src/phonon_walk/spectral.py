"""Interference spectra of site populations.

A population ``P_nm(t)`` is a constant plus one cosine per mode pair,
``P_nm(t) = dc + 2 Σ_{q>p} A_pq cos((ω_q − ω_p) t)``. ``analytic_spectrum``
lists those lines from a mode basis; ``dft_trace`` transforms a sampled
series so that each line shows up with magnitude ``|A_pq|``; ``match_peaks``
pairs the two.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.signal

from phonon_walk.coupling import check_site
from phonon_walk.dynamics import ModeBasis, uniform_step
from phonon_walk.errors import DomainError
from phonon_walk.types import FloatArray, ModePair, PopulationSeries, Site, WindowName

logger = logging.getLogger(__name__)

WINDOW_ENBW: dict[WindowName, float] = {"rect": 1.0, "hann": 1.5}
"""Equivalent noise bandwidth of each window, in bins."""

AMPLITUDE_HALF_WIDTH = 2


@dataclass(frozen=True, slots=True)
class SpectrumLine:
    """One beat between modes p and q: ``freq = ω_q − ω_p`` in rad/s."""

    freq: float
    amplitude: float
    mode_pair: ModePair

    @property
    def freq_hz(self) -> float:
        return self.freq / (2.0 * math.pi)


@dataclass(frozen=True, slots=True)
class AnalyticSpectrum:
    source: Site
    site: Site
    dc: float
    lines: tuple[SpectrumLine, ...]


@dataclass(frozen=True, eq=False)
class DftSpectrum:
    """One-sided DFT magnitude of one site's population, bins 1 through T//2.

    Magnitudes are normalized by the window sum, so a cosine of amplitude A
    centred on a bin reads A/2 there.
    """

    freqs: FloatArray
    magnitude: FloatArray
    dc: float
    site: Site
    window: WindowName
    resolution: float
    enbw: float

    def __post_init__(self) -> None:
        for name in ("freqs", "magnitude"):
            value = np.array(getattr(self, name), dtype=np.float64)
            value.setflags(write=False)
            object.__setattr__(self, name, value)


@dataclass(frozen=True, slots=True)
class PeakMatch:
    """An analytic line and the DFT local maximum nearest to it, if any."""

    line: SpectrumLine
    peak_freq: float | None
    offset_bins: float | None
    estimated_amplitude: float | None
    amplitude_ratio: float | None

    @property
    def matched(self) -> bool:
        return self.peak_freq is not None


@dataclass(frozen=True, slots=True)
class MatchReport:
    site: Site
    tol_bins: float
    entries: tuple[PeakMatch, ...]

    @property
    def unmatched(self) -> tuple[PeakMatch, ...]:
        return tuple(entry for entry in self.entries if not entry.matched)

    @property
    def all_matched(self) -> bool:
        return not self.unmatched


def analytic_spectrum(basis: ModeBasis, n: Site, m: Site) -> AnalyticSpectrum:
    """Lines and constant term of ``P_nm`` predicted by ``basis``.

    Mode pairs in the result are 1-based.
    """
    i = check_site(n, basis.n_ions)
    j = check_site(m, basis.n_ions)
    w = basis.b[i, :] * basis.b[j, :]
    lines = tuple(
        SpectrumLine(
            freq=float(basis.omega[q] - basis.omega[p]),
            amplitude=float(w[q] * w[p]),
            mode_pair=(p + 1, q + 1),
        )
        for p in range(len(w))
        for q in range(p + 1, len(w))
    )
    return AnalyticSpectrum(source=n, site=m, dc=float(np.sum(w**2)), lines=lines)


def window_values(window: WindowName, size: int) -> FloatArray:
    if window == "rect":
        return np.ones(size)
    if window == "hann":
        return scipy.signal.get_window("hann", size)
    msg = f"unknown window {window!r}; expected 'rect' or 'hann'"
    raise DomainError(msg)


def dft_trace(
    series: PopulationSeries, site: Site, *, window: WindowName = "rect"
) -> DftSpectrum:
    """DFT magnitude of the population at ``site``; the time grid must be uniform."""
    dt = uniform_step(series.times)
    values = np.asarray(series.populations, dtype=np.float64)
    j = check_site(site, values.shape[1])
    weights = window_values(window, len(values))
    spectrum = np.fft.rfft(values[:, j] * weights) / np.sum(weights)
    freqs = np.fft.rfftfreq(len(values), d=dt)
    return DftSpectrum(
        freqs=freqs[1:],
        magnitude=np.abs(spectrum[1:]),
        dc=float(spectrum[0].real),
        site=site,
        window=window,
        resolution=float(freqs[1]),
        enbw=WINDOW_ENBW[window],
    )


def local_maxima(magnitude: FloatArray, min_height: float) -> FloatArray:
    """Indices of bins above ``min_height`` that exceed both neighbours."""
    inner = magnitude[1:-1]
    peaks = (inner > min_height) & (inner > magnitude[:-2]) & (inner > magnitude[2:])
    return np.flatnonzero(peaks) + 1


def _estimate_amplitude(dft: DftSpectrum, peak: int) -> float:
    lo = max(peak - AMPLITUDE_HALF_WIDTH, 0)
    hi = min(peak + AMPLITUDE_HALF_WIDTH + 1, len(dft.magnitude))
    return float(np.sqrt(np.sum(dft.magnitude[lo:hi] ** 2) / dft.enbw))


def match_peaks(
    dft: DftSpectrum,
    lines: tuple[SpectrumLine, ...] | list[SpectrumLine],
    tol_bins: float = 1.0,
    *,
    min_height: float = 1e-6,
) -> MatchReport:
    """Pair every analytic line with the nearest DFT local maximum within ``tol_bins``.

    The amplitude estimate sums bin energy within two bins of the peak and
    divides by the window's noise bandwidth, which undoes leakage for a line
    between bins. Entries are ordered by frequency, then mode pair.
    """
    if not tol_bins >= 1:
        msg = f"tol_bins must be at least 1, got {tol_bins!r}"
        raise DomainError(msg)
    peaks = local_maxima(dft.magnitude, min_height)
    entries = []
    for line in sorted(lines, key=lambda line: (line.freq, line.mode_pair)):
        if peaks.size == 0:
            entries.append(PeakMatch(line, None, None, None, None))
            continue
        offsets = (dft.freqs[peaks] - line.freq_hz) / dft.resolution
        nearest = int(np.argmin(np.abs(offsets)))
        if abs(offsets[nearest]) > tol_bins:
            entries.append(PeakMatch(line, None, None, None, None))
            continue
        peak = int(peaks[nearest])
        estimate = _estimate_amplitude(dft, peak)
        ratio = estimate / abs(line.amplitude) if line.amplitude != 0.0 else math.inf
        entries.append(
            PeakMatch(
                line=line,
                peak_freq=float(dft.freqs[peak]),
                offset_bins=float(offsets[nearest]),
                estimated_amplitude=estimate,
                amplitude_ratio=ratio,
            )
        )
    report = MatchReport(site=dft.site, tol_bins=float(tol_bins), entries=tuple(entries))
    if report.unmatched:
        logger.info(
            "site %d: %d of %d lines without a DFT peak",
            dft.site,
            len(report.unmatched),
            len(report.entries),
        )
    return report

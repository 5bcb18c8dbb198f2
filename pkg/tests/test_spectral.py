"""Tests for analytic interference lines, DFTs and peak matching."""

import math
import random

import numpy as np
import pytest

from phonon_walk import (
    DomainError,
    ModeBasis,
    PropagationTrace,
    TrapConfig,
    analytic_spectrum,
    dft_trace,
    equilibrium_positions,
    hopping_matrix,
    match_peaks,
    mode_decomposition,
    propagate,
)
from phonon_walk.spectral import local_maxima


def _series(times, values) -> PropagationTrace:
    return PropagationTrace(times=times, p=np.column_stack([values]), source=1)


def test_two_ion_line():
    """Two ions beat at κ₀ with amplitude 1/4."""
    config = TrapConfig.from_lab_units(n_ions=2)
    hopping = hopping_matrix(equilibrium_positions(config), config)
    spectrum = analytic_spectrum(mode_decomposition(hopping), 1, 1)
    assert spectrum.dc == pytest.approx(0.5)
    (line,) = spectrum.lines
    assert line.freq == pytest.approx(hopping.kappa0, rel=1e-10)
    assert line.amplitude == pytest.approx(0.25)
    assert line.mode_pair == (1, 2)


def test_calcium_source_two_has_six_lines(calcium_basis: ModeBasis):
    """Test six lines for the calcium chain, the highest near 5.8 kHz."""
    spectrum = analytic_spectrum(calcium_basis, 2, 3)
    assert len(spectrum.lines) == 6
    assert all(line.freq > 0 for line in spectrum.lines)
    assert all(abs(line.amplitude) <= 1 for line in spectrum.lines)
    top = max(line.freq_hz for line in spectrum.lines)
    assert top == pytest.approx(5.8e3, abs=50)
    for line in spectrum.lines:
        p, q = line.mode_pair
        expected = calcium_basis.omega[q - 1] - calcium_basis.omega[p - 1]
        assert line.freq == pytest.approx(expected)


def test_lines_reconstruct_the_initial_state(calcium_basis: ModeBasis):
    """Test the lines sum to the initial state at t = 0."""
    for n in range(1, 5):
        for m in range(1, 5):
            spectrum = analytic_spectrum(calcium_basis, n, m)
            at_zero = spectrum.dc + 2 * sum(line.amplitude for line in spectrum.lines)
            assert at_zero == pytest.approx(float(n == m), abs=1e-10)


def test_dc_terms_sum_to_one(calcium_basis: ModeBasis):
    """Test the DC terms over all sites sum to one."""
    for n in range(1, 5):
        total = sum(analytic_spectrum(calcium_basis, n, m).dc for m in range(1, 5))
        assert total == pytest.approx(1.0, abs=1e-10)


def test_amplitudes_are_symmetric_in_source_and_site(calcium_basis: ModeBasis):
    """Swapping source and site leaves every amplitude unchanged."""
    for n in range(1, 5):
        for m in range(1, 5):
            forward = analytic_spectrum(calcium_basis, n, m).lines
            backward = analytic_spectrum(calcium_basis, m, n).lines
            assert [line.amplitude for line in forward] == [line.amplitude for line in backward]


def test_amplitudes_cancel_over_sites(calcium_basis: ModeBasis):
    """Test each line cancels when summed over sites."""
    for n in range(1, 5):
        per_site = [analytic_spectrum(calcium_basis, n, m).lines for m in range(1, 5)]
        for pair_lines in zip(*per_site):
            assert sum(line.amplitude for line in pair_lines) == pytest.approx(0.0, abs=1e-10)


def test_constant_trace_has_no_spectrum():
    """Test a constant trace has only a DC term."""
    times = np.arange(800) * 12.5e-6
    dft = dft_trace(_series(times, np.full(800, 0.3)), 1)
    assert np.max(dft.magnitude) < 1e-12
    assert dft.dc == pytest.approx(0.3)


@pytest.mark.parametrize("window", ["rect", "hann"])
def test_bin_centred_cosine_reads_half_its_amplitude(window):
    """Test the magnitude normalization for both windows."""
    times = np.arange(800) * 12.5e-6
    frequency = 25 * 100.0
    amplitude = 0.4
    dft = dft_trace(_series(times, 0.5 + amplitude * np.cos(2 * math.pi * frequency * times)), 1, window=window)
    assert dft.resolution == pytest.approx(100.0)
    assert dft.freqs[24] == pytest.approx(frequency)
    assert dft.magnitude[24] == pytest.approx(amplitude / 2, abs=1e-12)
    assert dft.dc == pytest.approx(0.5, abs=1e-12)
    assert dft.enbw == {"rect": 1.0, "hann": 1.5}[window]


def test_dft_needs_a_uniform_grid():
    """Test a non-uniform time grid."""
    times = np.array([0.0, 1.0, 2.5, 3.0])
    with pytest.raises(DomainError, match="uniform"):
        dft_trace(_series(times, np.zeros(4)), 1)


def test_dft_rejects_unknown_window(calcium_trace):
    """Test an unknown window name."""
    with pytest.raises(DomainError, match="window"):
        dft_trace(calcium_trace, 1, window="blackman")  # type: ignore[arg-type]


def test_rect_dc_is_the_mean(calcium_trace: PropagationTrace, calcium_basis: ModeBasis):
    """The unwindowed DC term is the sample mean."""
    for site in range(1, 5):
        dft = dft_trace(calcium_trace, site)
        assert dft.dc == pytest.approx(float(np.mean(calcium_trace.p[:, site - 1])), abs=1e-14)
        spectrum = analytic_spectrum(calcium_basis, 2, site)
        mean = spectrum.dc + sum(
            2 * line.amplitude * np.mean(np.cos(line.freq * calcium_trace.times))
            for line in spectrum.lines
        )
        assert dft.dc == pytest.approx(mean, abs=1e-10)


def test_windowed_dc_matches_mode_weights(calcium_trace: PropagationTrace, calcium_basis: ModeBasis):
    """Test the Hann DC term against the mode weights."""
    for site in range(1, 5):
        dft = dft_trace(calcium_trace, site, window="hann")
        assert dft.dc == pytest.approx(analytic_spectrum(calcium_basis, 2, site).dc, abs=1e-3)


def test_every_line_has_a_peak_within_one_bin(calcium_trace, calcium_basis):
    """Test line matching with a Hann window."""
    for site in range(1, 5):
        dft = dft_trace(calcium_trace, site, window="hann")
        report = match_peaks(dft, analytic_spectrum(calcium_basis, 2, site).lines, tol_bins=1)
        assert report.all_matched
        for entry in report.entries:
            assert abs(entry.peak_freq - entry.line.freq_hz) <= dft.resolution


def test_amplitude_ratios_on_a_long_record(calcium_basis):
    """Test peak amplitudes over a 100 ms record."""
    times = np.arange(8000) * 12.5e-6
    trace = propagate(calcium_basis, 2, times)
    for site in range(1, 5):
        dft = dft_trace(trace, site, window="hann")
        report = match_peaks(dft, analytic_spectrum(calcium_basis, 2, site).lines)
        assert report.all_matched
        for entry in report.entries:
            assert entry.amplitude_ratio == pytest.approx(1.0, abs=0.1)


def test_constant_trace_matches_nothing(calcium_basis):
    """Test a flat trace leaves every line unmatched."""
    times = np.arange(800) * 12.5e-6
    trace = PropagationTrace(times=times, p=np.full((800, 4), 0.25), source=2)
    lines = analytic_spectrum(calcium_basis, 2, 1).lines
    report = match_peaks(dft_trace(trace, 1), lines)
    assert len(report.unmatched) == len(lines)
    assert not report.all_matched


def test_empty_line_list_gives_empty_report(calcium_trace):
    """No lines make an empty, fully matched report."""
    report = match_peaks(dft_trace(calcium_trace, 1), [])
    assert report.entries == ()
    assert report.all_matched


def test_report_ignores_line_order(calcium_trace, calcium_basis):
    """Test the report does not depend on line order."""
    dft = dft_trace(calcium_trace, 3, window="hann")
    lines = list(analytic_spectrum(calcium_basis, 2, 3).lines)
    shuffled = lines[:]
    random.Random(4).shuffle(shuffled)
    assert match_peaks(dft, lines) == match_peaks(dft, shuffled)


def test_tolerance_must_cover_a_bin(calcium_trace):
    """Test a tolerance below one bin."""
    with pytest.raises(DomainError):
        match_peaks(dft_trace(calcium_trace, 1), [], tol_bins=0.5)


def test_local_maxima_three_point_rule():
    """Test the three-point peak rule and the height floor."""
    magnitude = np.array([0.0, 0.2, 0.1, 0.1, 0.5, 0.3, 1e-9, 0.0])
    np.testing.assert_array_equal(local_maxima(magnitude, 1e-6), [1, 4])


def test_rect_dc_matches_mode_weights(calcium_trace: PropagationTrace, calcium_basis: ModeBasis):
    """Test the unwindowed DC term against Σ_p (b_n b_m)² over a 10 ms record."""
    for site in range(1, 5):
        dft = dft_trace(calcium_trace, site)
        expected = float(np.sum((calcium_basis.b[1] * calcium_basis.b[site - 1]) ** 2))
        assert analytic_spectrum(calcium_basis, 2, site).dc == pytest.approx(expected, abs=1e-12)
        assert dft.dc == pytest.approx(expected, abs=1e-3)


def test_rect_lines_have_a_peak_within_one_bin(calcium_trace, calcium_basis):
    """Test line matching with the default rectangular window."""
    for site in range(1, 5):
        dft = dft_trace(calcium_trace, site)
        assert dft.window == "rect"
        report = match_peaks(dft, analytic_spectrum(calcium_basis, 2, site).lines, tol_bins=1)
        assert report.all_matched, site
        for entry in report.entries:
            assert abs(entry.peak_freq - entry.line.freq_hz) <= dft.resolution


def test_average_over_whole_beat_periods_is_the_dc_term():
    """Test a two-ion walk averaged over four full beats."""
    config = TrapConfig.from_lab_units(n_ions=2)
    basis = mode_decomposition(hopping_matrix(equilibrium_positions(config), config))
    period = 2 * math.pi / float(basis.omega[1] - basis.omega[0])
    trace = propagate(basis, 1, np.arange(4 * 64) * period / 64)
    for site in (1, 2):
        dc = analytic_spectrum(basis, 1, site).dc
        assert float(np.mean(trace.p[:, site - 1])) == pytest.approx(dc, abs=1e-12)
        assert dft_trace(trace, site).dc == pytest.approx(dc, abs=1e-12)


def test_sample_mean_stays_within_the_beat_bound(calcium_trace, calcium_basis):
    """Test |mean − dc| against the partial-period leftover of every cosine."""
    times = calcium_trace.times
    step, count = times[1] - times[0], len(times)
    for site in range(1, 5):
        spectrum = analytic_spectrum(calcium_basis, 2, site)
        bound = sum(
            2 * abs(line.amplitude) / (count * abs(math.sin(line.freq * step / 2)))
            for line in spectrum.lines
        )
        assert abs(float(np.mean(calcium_trace.p[:, site - 1])) - spectrum.dc) <= bound + 1e-12

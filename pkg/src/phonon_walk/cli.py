"""Command line: ``phonon-walk {positions,simulate,spectrum,fit,sweep}``.

Exit codes are 0 on success, 1 for usage and file-format errors, 2 for
model or domain errors and 3 when data cannot constrain a fit.
"""

import argparse
import logging
import math
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import NoReturn

import numpy as np

from phonon_walk.artifacts import (
    ArtifactWriter,
    artifact_writer,
    fmt,
    read_dataset,
    read_trace,
    write_dataset,
    write_trace,
)
from phonon_walk.coupling import HoppingMatrix, max_adjacent_hopping_time
from phonon_walk.crystal import IonChain
from phonon_walk.dynamics import (
    MeasurementModel,
    ModeBasis,
    PropagationTrace,
    apply_measurement_model,
    propagate,
)
from phonon_walk.errors import (
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    FormatError,
)
from phonon_walk.fitting import (
    FitBounds,
    chain_shape,
    fit_observation,
    model_populations,
)
from phonon_walk.scenario import Scenario, default_scenario, load_scenario
from phonon_walk.services import scenario_container
from phonon_walk.spectral import analytic_spectrum, dft_trace, match_peaks
from phonon_walk.types import FitParameterName, SweepParameter, WindowName

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_DEGENERATE = 3

SEED_ENVIRONMENT = "PHONONWALK_SEED"

BOUND_KEYS: dict[str, tuple[FitParameterName, float]] = {
    "kappa0_khz": ("kappa0", 2.0 * math.pi * 1e3),
    "t_offset_us": ("t_offset", 1e-6),
    "scale": ("scale", 1.0),
    "heating_rate": ("heating_rate", 1.0),
}
"""``--bounds`` key → fitted parameter and the factor converting to SI units."""

SWEEP_KEYS: dict[SweepParameter, str] = {
    "omega_y": "omega_y_mhz",
    "omega_z": "omega_z_mhz",
    "n_ions": "n_ions",
}
"""``--parameter`` value and the scenario trap key it replaces."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bound(text: str) -> tuple[FitParameterName, float, float]:
    key, sep, interval = text.partition("=")
    lo_text, colon, hi_text = interval.partition(":")
    if not sep or not colon or key not in BOUND_KEYS:
        msg = f"expected KEY=LO:HI with KEY in {', '.join(BOUND_KEYS)}, got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    try:
        lo, hi = float(lo_text), float(hi_text)
    except ValueError:
        msg = f"bounds for {key} are not numbers: {interval!r}"
        raise argparse.ArgumentTypeError(msg) from None
    name, unit = BOUND_KEYS[key]
    return name, lo * unit, hi * unit


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", type=Path, help="scenario file (default: bundled)")
    common.add_argument("--seed", type=int, help=f"overrides {SEED_ENVIRONMENT} and run.seed")
    common.add_argument("--source", type=int, help="initial ion, overrides run.source")
    common.add_argument("--out", type=Path, help="output directory, overrides output.directory")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = _Parser(
        prog="phonon-walk",
        description="Quantum walks of a local phonon in a trapped-ion chain.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("positions", parents=[common], help="equilibrium geometry")
    commands.add_parser("simulate", parents=[common], help="ideal trace and sampled dataset")
    spectrum = commands.add_parser("spectrum", parents=[common], help="DFT against analytic lines")
    spectrum.add_argument("--trace", type=Path, help="trace.csv to transform instead of simulating")
    spectrum.add_argument("--window", choices=["rect", "hann"], default="rect")
    fit = commands.add_parser("fit", parents=[common], help="least-squares fit of a dataset")
    fit.add_argument("--dataset", type=Path, required=True, help="dataset.csv to fit")
    fit.add_argument(
        "--bounds",
        type=_bound,
        action="append",
        default=[],
        metavar="KEY=LO:HI",
        help=f"search interval; KEY in {', '.join(BOUND_KEYS)}",
    )
    sweep = commands.add_parser("sweep", parents=[common], help="coupling scales against one trap setting")
    sweep.add_argument("--parameter", choices=sorted(SWEEP_KEYS), required=True)
    values = sweep.add_mutually_exclusive_group(required=True)
    values.add_argument("--values", help="comma-separated values (MHz or ion counts)")
    values.add_argument("--range", dest="value_range", metavar="LO:HI:COUNT")
    return parser


def resolve_seed(flag: int | None, scenario: Scenario) -> int:
    """``--seed`` wins over the environment, which wins over the scenario."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENVIRONMENT)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            msg = f"{SEED_ENVIRONMENT} must be an integer, got {env!r}"
            raise FormatError(msg) from None
    return scenario.run.seed


def _scenario(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.scenario) if args.scenario else default_scenario()
    changes: dict[str, int] = {"seed": resolve_seed(args.seed, scenario)}
    if args.source is not None:
        changes["source"] = args.source
    scenario = scenario.with_run(**changes)
    if args.out is not None:
        scenario = scenario.with_output(directory=str(args.out))
    return scenario


def _geometry_records(chain: IonChain, hopping: HoppingMatrix) -> dict[str, object]:
    records: dict[str, object] = {
        "n_ions": chain.n_ions,
        "length_scale_um": chain.length_scale * 1e6,
        "u": tuple(float(x) for x in chain.u),
        "z0_um": tuple(float(x) * 1e6 for x in chain.z0),
        "gaps_um": tuple(float(x) * 1e6 for x in chain.gaps),
    }
    if chain.n_ions > 1:
        hop_time = max_adjacent_hopping_time(hopping)
        records |= {
            "d0_um": chain.central_gap * 1e6,
            "kappa0_rad_s": hopping.kappa0,
            "kappa0_khz": hopping.kappa0 / (2.0 * math.pi) / 1e3,
            "max_adjacent_hopping_time_us": hop_time * 1e6,
        }
    return records


def _print_records(records: dict[str, object], keys: Sequence[str]) -> None:
    for key in keys:
        if key in records:
            value = records[key]
            print(f"{key} = {fmt(value) if isinstance(value, float) else value}")


def cmd_positions(scenario: Scenario, _: argparse.Namespace) -> None:
    container = scenario_container(scenario)
    chain, hopping = container.get(IonChain, HoppingMatrix)
    records = _geometry_records(chain, hopping)
    gaps = [fmt(g * 1e6) for g in chain.gaps] + [""]
    with artifact_writer(scenario.output.directory) as writer:
        writer.csv(
            "positions.csv",
            ["ion", "u", "z0_um", "gap_um"],
            (
                [str(n), fmt(u), fmt(z * 1e6), gap]
                for n, (u, z, gap) in enumerate(zip(chain.u, chain.z0, gaps), start=1)
            ),
        )
        if "txt" in scenario.output.formats:
            writer.records("positions.txt", records)
    _print_records(records, ["n_ions", "length_scale_um", "d0_um"])


def _hamiltonian_rows(matrix: np.ndarray) -> list[list[str]]:
    return [[str(n), *(fmt(x) for x in row)] for n, row in enumerate(matrix, start=1)]


def cmd_simulate(scenario: Scenario, _: argparse.Namespace) -> None:
    container = scenario_container(scenario)
    chain, hopping, basis, model = container.get(
        IonChain, HoppingMatrix, ModeBasis, MeasurementModel
    )
    trace = propagate(basis, scenario.run.source, scenario.run.times)
    dataset = apply_measurement_model(trace, model)
    header = ["ion", *(f"h{m}" for m in range(1, hopping.n_ions + 1))]
    records = _geometry_records(chain, hopping)
    records |= {
        "source": scenario.run.source,
        "n_steps": scenario.run.n_steps,
        "dt_us": scenario.run.dt_us,
        "shots": model.shots,
        "seed": model.seed,
        "heating_budget": model.heating_rate * scenario.run.t_end_us * 1e-6,
        "regime_warning": dataset.metadata["regime_warning"],
    }
    if hopping.n_ions > 1:
        hop_time = max_adjacent_hopping_time(hopping)
        records["record_over_hopping_time"] = scenario.run.t_end_us * 1e-6 / hop_time
    with artifact_writer(scenario.output.directory) as writer:
        write_trace(writer, trace)
        write_dataset(writer, dataset)
        writer.csv("hamiltonian.csv", header, _hamiltonian_rows(hopping.h))
        if hopping.n_ions > 1:
            writer.csv("hamiltonian_kappa.csv", header, _hamiltonian_rows(hopping.normalized))
        if "txt" in scenario.output.formats:
            writer.records("summary.txt", records)
        if "pgm" in scenario.output.formats:
            writer.graymap("trace.pgm", trace.p)
            writer.graymap("dataset.pgm", dataset.populations)
        logger.info("simulated %d steps into %s", len(trace.times), writer.directory)
    _print_records(records, ["kappa0_khz", "d0_um", "max_adjacent_hopping_time_us", "n_steps"])


def _write_spectrum(
    writer: ArtifactWriter, basis: ModeBasis, trace: PropagationTrace, window: WindowName
) -> tuple[int, int]:
    matched = total = 0
    line_rows: list[list[str]] = []
    report: dict[str, object] = {"source": trace.source, "window": window}
    for site in range(1, trace.n_ions + 1):
        dft = dft_trace(trace, site, window=window)
        writer.csv(
            f"dft_site{site}.csv",
            ["freq_hz", "magnitude"],
            ([fmt(f), fmt(a)] for f, a in zip(dft.freqs, dft.magnitude)),
            comments={"dc": fmt(dft.dc), "window": window, "resolution_hz": fmt(dft.resolution)},
        )
        analytic = analytic_spectrum(basis, trace.source, site)
        result = match_peaks(dft, analytic.lines)
        report |= {
            f"site{site}.dc_analytic": analytic.dc,
            f"site{site}.dc_dft": dft.dc,
        }
        for entry in result.entries:
            p, q = entry.line.mode_pair
            line_rows.append(
                [str(site), str(p), str(q), fmt(entry.line.freq_hz / 1e3), fmt(entry.line.amplitude)]
            )
            prefix = f"site{site}.line{p}-{q}"
            report[f"{prefix}.freq_khz"] = entry.line.freq_hz / 1e3
            report[f"{prefix}.matched"] = entry.matched
            if entry.peak_freq is not None:
                report[f"{prefix}.peak_khz"] = entry.peak_freq / 1e3
                report[f"{prefix}.offset_bins"] = entry.offset_bins
                report[f"{prefix}.amplitude_ratio"] = entry.amplitude_ratio
        matched += len(result.entries) - len(result.unmatched)
        total += len(result.entries)
    report |= {"matched": matched, "unmatched": total - matched}
    writer.csv("lines.csv", ["site", "p", "q", "freq_khz", "amplitude"], line_rows)
    writer.records("match.txt", report)
    return matched, total


def cmd_spectrum(scenario: Scenario, args: argparse.Namespace) -> None:
    container = scenario_container(scenario)
    basis = container.get(ModeBasis)
    if args.trace is not None:
        trace = read_trace(args.trace, source=args.source)
        if trace.n_ions != basis.n_ions:
            msg = f"trace has {trace.n_ions} ions but the scenario has {basis.n_ions}"
            raise DomainError(msg)
    else:
        trace = propagate(basis, scenario.run.source, scenario.run.times)
    with artifact_writer(scenario.output.directory) as writer:
        matched, total = _write_spectrum(writer, basis, trace, args.window)
    print(f"matched = {matched}")
    print(f"unmatched = {total - matched}")


def cmd_fit(scenario: Scenario, args: argparse.Namespace) -> None:
    dataset = read_dataset(args.dataset)
    bounds = FitBounds.default()
    for name, lo, hi in args.bounds:
        bounds = bounds.with_interval(name, lo, hi)
    result = fit_observation(dataset, bounds)
    model = model_populations(
        chain_shape(dataset.n_ions), result.params, dataset.times, dataset.source
    )
    records: dict[str, object] = {
        "kappa0_rad_s": result.kappa0,
        "kappa0_khz": result.kappa0 / (2.0 * math.pi) / 1e3,
        "t_offset_us": result.t_offset * 1e6,
        "scale": result.scale,
        "heating_rate": result.heating_rate,
        "rss": result.rss,
        "grid_rss": result.grid_rss,
        "n_evals": result.n_evals,
        "sweeps": result.sweeps,
        "converged": result.converged,
        "at_bounds": ",".join(result.at_bounds) or "none",
    }
    n = dataset.n_ions
    header = ["t_us", *(f"data{m}" for m in range(1, n + 1)), *(f"model{m}" for m in range(1, n + 1))]
    rows = (
        [fmt(t * 1e6), *(fmt(x) for x in data), *(fmt(x) for x in fitted)]
        for t, data, fitted in zip(dataset.times, dataset.populations, model)
    )
    with artifact_writer(scenario.output.directory) as writer:
        writer.records("fit.txt", records)
        writer.csv("overlay.csv", header, rows)
    _print_records(records, ["kappa0_khz", "t_offset_us", "scale", "heating_rate", "converged"])


def sweep_values(
    parameter: SweepParameter, values: str | None, value_range: str | None
) -> list[float]:
    """Parse ``--values a,b`` or ``--range lo:hi:count``; DomainError when invalid."""
    try:
        if values is not None:
            result = [float(v) for v in values.split(",")]
        else:
            lo, hi, count = (value_range or "").split(":")
            bounds, n = (float(lo), float(hi)), int(count)
    except ValueError:
        msg = f"cannot parse sweep values {values or value_range!r}"
        raise DomainError(msg) from None
    if values is None:
        if n < 1 or bounds[1] < bounds[0]:
            msg = f"invalid range {value_range!r}"
            raise DomainError(msg)
        result = [float(v) for v in np.linspace(*bounds, n)]
    if not result or not all(math.isfinite(v) and v > 0 for v in result):
        msg = "sweep values must be positive and finite"
        raise DomainError(msg)
    if parameter == "n_ions" and not all(v.is_integer() and v >= 2 for v in result):
        msg = "n_ions sweep values must be integers of at least 2"
        raise DomainError(msg)
    return result


def cmd_sweep(scenario: Scenario, args: argparse.Namespace) -> None:
    key = SWEEP_KEYS[args.parameter]
    rows = []
    for value in sweep_values(args.parameter, args.values, args.value_range):
        setting = int(value) if key == "n_ions" else value
        point = scenario.with_run(source=1).with_trap(**{key: setting})
        chain, hopping = scenario_container(point).get(IonChain, HoppingMatrix)
        rows.append(
            [
                str(setting) if key == "n_ions" else fmt(setting),
                fmt(hopping.kappa0),
                fmt(hopping.kappa0 / (2.0 * math.pi) / 1e3),
                fmt(chain.central_gap * 1e6),
                fmt(max_adjacent_hopping_time(hopping) * 1e6),
            ]
        )
    header = [key, "kappa0_rad_s", "kappa0_khz", "d0_um", "max_adjacent_hopping_time_us"]
    with artifact_writer(scenario.output.directory) as writer:
        writer.csv("sweep.csv", header, rows)
    for row in rows:
        print(",".join(row))


COMMANDS: dict[str, Callable[[Scenario, argparse.Namespace], None]] = {
    "positions": cmd_positions,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](_scenario(args), args)
    except FormatError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except DegenerateDataError as exc:
        logger.error("%s", exc)
        return EXIT_DEGENERATE
    except (DomainError, ConvergenceError) as exc:
        logger.error("%s", exc)
        return EXIT_MODEL
    return EXIT_OK

"""Scenario files: trap, run, measurement and output settings for one experiment.

A scenario is flat text with dotted keys, one per line::

    trap.n_ions = 4
    trap.omega_y_mhz = 2.9
    run.source = 2

which is valid TOML, so it is parsed with ``tomllib``; ``[trap]`` tables
work too. The full key table lives in ``docs/scenario.md``.
"""

import math
import re
import tomllib
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from phonon_walk.crystal import TrapConfig
from phonon_walk.dynamics import MeasurementModel
from phonon_walk.errors import DomainError, FormatError
from phonon_walk.types import FloatArray, Site

OUTPUT_FORMATS = frozenset({"txt", "pgm"})
"""Companion artifacts that ``output.formats`` can switch on."""


@dataclass(frozen=True, slots=True)
class _Key:
    kind: type
    required: bool = True
    default: Any = None


SCENARIO_KEYS: dict[str, _Key] = {
    "trap.n_ions": _Key(int),
    "trap.mass_amu": _Key(float),
    "trap.omega_x_mhz": _Key(float),
    "trap.omega_y_mhz": _Key(float),
    "trap.omega_z_mhz": _Key(float),
    "run.source": _Key(int),
    "run.t_end_us": _Key(float),
    "run.dt_us": _Key(float),
    "run.shots": _Key(int),
    "run.seed": _Key(int),
    "measurement.scale": _Key(float),
    "measurement.t_offset_us": _Key(float),
    "measurement.heating_rate": _Key(float),
    "output.directory": _Key(str, required=False, default="out"),
    "output.formats": _Key(list, required=False, default=("txt", "pgm")),
}


@dataclass(frozen=True, slots=True)
class TrapSection:
    n_ions: int
    mass_amu: float
    omega_x_mhz: float
    omega_y_mhz: float
    omega_z_mhz: float


@dataclass(frozen=True, slots=True)
class RunSection:
    source: Site
    t_end_us: float
    dt_us: float
    shots: int
    seed: int

    def __post_init__(self) -> None:
        if not (self.dt_us > 0 and math.isfinite(self.dt_us)):
            msg = f"run.dt_us must be positive, got {self.dt_us!r}"
            raise DomainError(msg)
        if not self.t_end_us >= self.dt_us:
            msg = f"run.t_end_us must be at least run.dt_us, got {self.t_end_us!r}"
            raise DomainError(msg)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end_us / self.dt_us))

    @property
    def dt(self) -> float:
        return self.dt_us * 1e-6

    @property
    def times(self) -> FloatArray:
        """``n_steps`` samples in seconds, starting at 0."""
        return np.arange(self.n_steps) * self.dt


@dataclass(frozen=True, slots=True)
class MeasurementSection:
    scale: float
    t_offset_us: float
    heating_rate: float


@dataclass(frozen=True, slots=True)
class OutputSection:
    directory: str = "out"
    formats: tuple[str, ...] = ("txt", "pgm")

    def __post_init__(self) -> None:
        unknown = sorted(set(self.formats) - OUTPUT_FORMATS)
        if unknown:
            msg = f"unknown output format {unknown[0]!r}; choose from {sorted(OUTPUT_FORMATS)}"
            raise DomainError(msg)


@dataclass(frozen=True, slots=True)
class Scenario:
    trap: TrapSection
    run: RunSection
    measurement: MeasurementSection
    output: OutputSection = OutputSection()

    def __post_init__(self) -> None:
        if not 1 <= self.run.source <= self.trap.n_ions:
            msg = f"run.source {self.run.source} outside 1..{self.trap.n_ions}"
            raise DomainError(msg)

    def trap_config(self) -> TrapConfig:
        return TrapConfig.from_lab_units(
            n_ions=self.trap.n_ions,
            mass_amu=self.trap.mass_amu,
            omega_y_mhz=self.trap.omega_y_mhz,
            omega_z_mhz=self.trap.omega_z_mhz,
            omega_x_mhz=self.trap.omega_x_mhz,
        )

    def measurement_model(self) -> MeasurementModel:
        return MeasurementModel(
            scale=self.measurement.scale,
            t_offset=self.measurement.t_offset_us / 1e6,
            heating_rate=self.measurement.heating_rate,
            shots=self.run.shots,
            seed=self.run.seed,
        )

    def with_run(self, **changes: Any) -> "Scenario":
        return replace(self, run=replace(self.run, **changes))

    def with_trap(self, **changes: Any) -> "Scenario":
        return replace(self, trap=replace(self.trap, **changes))

    def with_output(self, **changes: Any) -> "Scenario":
        return replace(self, output=replace(self.output, **changes))


def _flatten(table: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _line_of(text: str, key: str) -> int | None:
    leaf = re.escape(key.rsplit(".", 1)[-1])
    for number, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*([\w.]*\.)?{leaf}\s*=", line):
            return number
    return None


def _coerce(key: str, value: Any, entry: _Key, text: str, path: Path | str | None) -> Any:
    def reject(expected: str) -> FormatError:
        msg = f"{key} must be {expected}, got {value!r}"
        return FormatError(msg, path=path, line=_line_of(text, key))

    if entry.kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise reject("an integer")
        return value
    if entry.kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise reject("a number")
        return float(value)
    if entry.kind is str:
        if not isinstance(value, str):
            raise reject("a string")
        return value
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise reject("a list of strings")
    return tuple(value)


def parse_scenario(text: str, path: Path | str | None = None) -> Scenario:
    """Parse scenario text; FormatError names the offending key or line."""
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        found = re.search(r"line (\d+)", str(exc))
        line = int(found.group(1)) if found else None
        msg = f"not a valid scenario file ({exc})"
        raise FormatError(msg, path=path, line=line) from exc
    flat = _flatten(table)
    for key in flat:
        if key not in SCENARIO_KEYS:
            msg = f"unknown scenario key {key!r}"
            raise FormatError(msg, path=path, line=_line_of(text, key))
    values: dict[str, Any] = {}
    for key, entry in SCENARIO_KEYS.items():
        if key not in flat:
            if entry.required:
                msg = f"missing required scenario key {key!r}"
                raise FormatError(msg, path=path)
            values[key] = entry.default
            continue
        values[key] = _coerce(key, flat[key], entry, text, path)

    def section(name: str) -> dict[str, Any]:
        return {
            key.split(".", 1)[1]: value
            for key, value in values.items()
            if key.startswith(f"{name}.")
        }

    return Scenario(
        trap=TrapSection(**section("trap")),
        run=RunSection(**section("run")),
        measurement=MeasurementSection(**section("measurement")),
        output=OutputSection(**section("output")),
    )


def load_scenario(path: Path | str) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        msg = f"cannot read scenario: {exc.strerror}"
        raise FormatError(msg, path=path) from exc
    return parse_scenario(text, path)


def default_scenario_text() -> str:
    return (
        resources.files("phonon_walk")
        .joinpath("scenarios", "default.toml")
        .read_text(encoding="utf-8")
    )


def default_scenario() -> Scenario:
    """Four ⁴⁰Ca⁺ ions at (3.1, 2.9, 0.09) MHz, started on ion 2 and sampled for 10 ms."""
    return parse_scenario(default_scenario_text(), "default.toml")

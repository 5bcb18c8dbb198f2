"""Plain-text artifacts: CSV tables, ``key = value`` records and P2 graymaps.

Floats are written with ``repr`` so that files reproduce exactly across runs
and datasets read back to the same bits.
"""

import logging
from collections.abc import Iterable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from phonon_walk.dynamics import ObservationDataset, PropagationTrace
from phonon_walk.errors import FormatError
from phonon_walk.types import FloatArray

logger = logging.getLogger(__name__)

PGM_VALUES_PER_LINE = 16
TIME_RTOL = 1e-9


def fmt(value: float) -> str:
    return repr(float(value))


class ArtifactWriter:
    """Writes files into one directory and remembers them for cleanup."""

    def __init__(self, directory: Path) -> None:
        self.directory = directory
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def text(self, name: str, content: str) -> Path:
        target = self.path(name)
        self.written.append(target)
        target.write_text(content, encoding="utf-8", newline="\n")
        logger.debug("wrote %s", target)
        return target

    def csv(
        self,
        name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[str]],
        comments: Mapping[str, str] | None = None,
    ) -> Path:
        return self.text(name, render_csv(header, rows, comments))

    def records(self, name: str, records: Mapping[str, object]) -> Path:
        return self.text(name, render_records(records))

    def graymap(self, name: str, populations: FloatArray) -> Path:
        return self.text(name, render_graymap(populations))

    def discard(self) -> None:
        for target in self.written:
            target.unlink(missing_ok=True)
        self.written.clear()


@contextmanager
def artifact_writer(directory: Path | str) -> Iterator[ArtifactWriter]:
    """Yield a writer for ``directory``; files written so far are removed if the block fails."""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    writer = ArtifactWriter(target)
    try:
        yield writer
    except BaseException:
        writer.discard()
        raise


def render_csv(
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    comments: Mapping[str, str] | None = None,
) -> str:
    lines = [f"# {key}={value}" for key, value in (comments or {}).items()]
    lines.append(",".join(header))
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def render_records(records: Mapping[str, object]) -> str:
    return "".join(f"{key} = {_record_value(value)}\n" for key, value in records.items())


def _record_value(value: object) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_record_value(v) for v in value)
    return str(value)


def read_records(path: Path | str) -> dict[str, str]:
    records: dict[str, str] = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            msg = f"expected 'key = value', got {line!r}"
            raise FormatError(msg, path=path, line=number)
        records[key] = value
    return records


def render_graymap(populations: FloatArray) -> str:
    """P2 graymap with one row per ion and one column per time step."""
    values = np.rint(np.clip(np.asarray(populations), 0.0, 1.0) * 255).astype(int).T
    lines = ["P2", f"{values.shape[1]} {values.shape[0]}", "255"]
    for row in values:
        for start in range(0, len(row), PGM_VALUES_PER_LINE):
            lines.append(" ".join(str(v) for v in row[start : start + PGM_VALUES_PER_LINE]))
    return "\n".join(lines) + "\n"


def _times_us(times: FloatArray) -> list[str]:
    return [fmt(t * 1e6) for t in times]


def write_trace(writer: ArtifactWriter, trace: PropagationTrace, name: str = "trace.csv") -> Path:
    header = ["t_us", *(f"p{m}" for m in range(1, trace.n_ions + 1))]
    rows = (
        [t, *(fmt(p) for p in row)] for t, row in zip(_times_us(trace.times), trace.p)
    )
    return writer.csv(name, header, rows, comments={"source": str(trace.source)})


def write_dataset(
    writer: ArtifactWriter, dataset: ObservationDataset, name: str = "dataset.csv"
) -> Path:
    header = ["t_us", *(f"c{m}" for m in range(1, dataset.n_ions + 1)), "shots"]
    rows = (
        [t, *(str(int(c)) for c in row), str(dataset.shots)]
        for t, row in zip(_times_us(dataset.times), dataset.counts)
    )
    return writer.csv(name, header, rows, comments=dataset.metadata)


def _read_table(path: Path | str) -> tuple[dict[str, str], list[str], list[tuple[int, list[str]]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        msg = f"cannot read file: {exc.strerror}"
        raise FormatError(msg, path=path) from exc
    comments: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[tuple[int, list[str]]] = []
    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                msg = f"comment line is not 'key=value': {line!r}"
                raise FormatError(msg, path=path, line=number)
            comments[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        else:
            cells = line.split(",")
            if len(cells) != len(header):
                msg = f"expected {len(header)} columns, found {len(cells)}"
                raise FormatError(msg, path=path, line=number)
            rows.append((number, cells))
    if header is None or not rows:
        msg = "no data rows"
        raise FormatError(msg, path=path)
    return comments, header, rows


def _float(cell: str, path: Path | str, line: int | None) -> float:
    try:
        return float(cell)
    except ValueError:
        msg = f"not a number: {cell!r}"
        raise FormatError(msg, path=path, line=line) from None


def _int(cell: str, path: Path | str, line: int | None) -> int:
    try:
        return int(cell)
    except ValueError:
        msg = f"not an integer: {cell!r}"
        raise FormatError(msg, path=path, line=line) from None


def read_trace(path: Path | str, source: int | None = None) -> PropagationTrace:
    """Read a ``t_us,p1..pN`` table.

    ``source`` falls back to the ``# source=`` line, then to the largest
    population at t = 0.
    """
    comments, header, rows = _read_table(path)
    if header[0] != "t_us" or len(header) < 2:
        msg = f"trace header must start with t_us, got {','.join(header)!r}"
        raise FormatError(msg, path=path, line=1 + len(comments))
    times = np.array([_float(cells[0], path, n) for n, cells in rows]) * 1e-6
    p = np.array([[_float(c, path, n) for c in cells[1:]] for n, cells in rows])
    if source is None and "source" in comments:
        source = _int(comments["source"], path, None)
    elif source is None:
        source = int(np.argmax(p[0])) + 1
    return PropagationTrace(times=times, p=p, source=source)


def _check_times(
    path: Path | str, rows: list[tuple[int, list[str]]], times: FloatArray, dt: float
) -> None:
    """FormatError at the first ``t_us`` cell off the grid ``k·dt_s``."""
    for (n, cells), expected in zip(rows, times * 1e6):
        t_us = _float(cells[0], path, n)
        if abs(t_us - expected) > TIME_RTOL * max(abs(expected), dt * 1e6):
            msg = f"t_us {cells[0]} does not match the dt_s grid, expected {fmt(expected)}"
            raise FormatError(msg, path=path, line=n)


def read_dataset(path: Path | str) -> ObservationDataset:
    """Read a file written by ``write_dataset``.

    Times are rebuilt from the ``dt_s`` metadata, which makes the round
    trip bit-identical; every ``t_us`` cell must lie on that grid.
    """
    metadata, header, rows = _read_table(path)
    if header[0] != "t_us" or header[-1] != "shots" or len(header) < 3:
        msg = f"dataset header must be t_us,c1..cN,shots, got {','.join(header)!r}"
        raise FormatError(msg, path=path, line=1 + len(metadata))
    for key in ("dt_s", "source"):
        if key not in metadata:
            msg = f"missing metadata line '# {key}=...'"
            raise FormatError(msg, path=path)
    counts = np.array([[_int(c, path, n) for c in cells[1:-1]] for n, cells in rows])
    shots = {_int(cells[-1], path, n) for n, cells in rows}
    if len(shots) != 1:
        msg = "shots column is not constant"
        raise FormatError(msg, path=path)
    dt = _float(metadata["dt_s"], path, None)
    times = np.arange(len(rows)) * dt
    _check_times(path, rows, times, dt)
    return ObservationDataset(
        times=times,
        counts=counts,
        shots=shots.pop(),
        source=_int(metadata["source"], path, None),
        metadata=metadata,
    )

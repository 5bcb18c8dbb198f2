"""Doctests in ``src/phonon_walk`` and the README; ``docs/`` has its own conftest."""

from pathlib import Path

from sybil import Sybil
from sybil.parsers.myst import PythonCodeBlockParser
from sybil.parsers.rest import DocTestParser

ROOT = Path(__file__).parent

_collectors = (
    Sybil(
        parsers=[DocTestParser()],
        patterns=["*.py"],
        excludes=["__main__.py"],
        path="src",
    ).pytest(),
    Sybil(
        parsers=[PythonCodeBlockParser()],
        patterns=["README.md"],
        path=".",
    ).pytest(),
)


def pytest_collect_file(file_path: Path, parent):
    if file_path.is_relative_to(ROOT / "examples"):
        return None
    for collect in _collectors:
        if (collected := collect(file_path, parent)) is not None:
            return collected
    return None

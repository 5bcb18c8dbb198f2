"""Pytest configuration for docs/ markdown examples.

README.md is collected by the root conftest.py.
"""

import numpy as np
from sybil import Sybil
from sybil.parsers.myst import PythonCodeBlockParser

pytest_collect_file = Sybil(
    parsers=[PythonCodeBlockParser()],
    patterns=["*.md"],
    path=".",
    setup=lambda namespace: namespace.update(np=np),
).pytest()

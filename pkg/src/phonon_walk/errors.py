"""Exception hierarchy for phonon-walk.

Every error raised on purpose by the package derives from
``PhononWalkError``. The command line maps the subclasses onto exit codes:
``FormatError`` is a usage error (1), ``DomainError`` and
``ConvergenceError`` are model errors (2), ``DegenerateDataError`` is 3.
"""

from pathlib import Path


class PhononWalkError(Exception):
    """Base class for errors raised by phonon-walk."""


class DomainError(PhononWalkError, ValueError):
    """Inputs outside the domain of a model operation."""


class DegenerateInputError(DomainError):
    """Two ions share a position, so the Coulomb energy is singular."""


class ConvergenceError(PhononWalkError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, msg: str, *, residual: float, iterations: int) -> None:
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class DegenerateDataError(PhononWalkError):
    """Observed data cannot distinguish between candidate parameters."""


class FormatError(PhononWalkError, ValueError):
    """A scenario, trace or dataset file could not be parsed."""

    def __init__(
        self, msg: str, *, path: Path | str | None = None, line: int | None = None
    ) -> None:
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{msg}")
        self.path = path
        self.line = line

"""Exception hierarchy shared by the library and the command line.

The CLI maps these onto process exit codes (see ``qdetect.cli``).
"""

from __future__ import annotations


class QDetectError(Exception):
    """Base class for all package errors."""


class NumericalError(QDetectError):
    """A dense linear-algebra kernel failed or produced non-finite output."""

    def __init__(self, message: str, *, dim: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.dim = dim
        self.residual = residual


class ConsistencyError(NumericalError):
    """Probabilities left the admissible range by more than round-off.

    Raised by the evolution engines when a survival or first-detection
    probability drops below ``-1e-9``; carries the offending step.
    """

    def __init__(self, message: str, *, n: int, P: float, p: float):
        super().__init__(message)
        self.n = n
        self.P = P
        self.p = p


class CapacityError(QDetectError):
    """A dense matrix would exceed the configured size cap."""


class LatticeError(QDetectError):
    """Invalid lattice, detector layout or site index."""


class GraphFormatError(LatticeError):
    """Malformed graph file; ``line`` is 1-based (``None`` for whole-file problems)."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class GridMismatchError(QDetectError):
    """Two series are not sampled on the same measurement grid."""


class FitWindowError(QDetectError):
    """A power-law fit window is empty, too short, or has non-positive excess."""


class ConfigError(QDetectError):
    """Experiment configuration is invalid; ``field`` is a dotted path like ``run.tau``."""

    def __init__(self, message: str, *, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field

"""
异常定义
Every failure carries the exit code the CLI reports for it.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class SimulationError(Exception):
    """Base class for all errors raised by the solver suite."""

    exit_code: int = EXIT_VALIDATION


class ConfigError(SimulationError, ValueError):
    """A run or study configuration violates its schema or an invariant."""

    def __init__(self, message: str, key_path: Optional[str] = None, constraint: Optional[str] = None):
        self.key_path = key_path
        self.constraint = constraint
        prefix = f"{key_path}: " if key_path else ""
        super().__init__(f"{prefix}{message}")


class GridError(SimulationError, ValueError):
    """Grid specification or grid mismatch between operands."""


class NoiseError(SimulationError, ValueError):
    """Noise coefficients or Brownian increments are inconsistent."""


class ModelError(SimulationError, ValueError):
    """Invalid LES model parameters."""


class NumericAbort(SimulationError):
    """The time integration produced an unusable state."""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, time: Optional[float] = None, step: Optional[int] = None,
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.time = time
        self.step = step
        self.diagnostics = dict(diagnostics or {})
        where = f" (step {step}, t={time:.6g})" if step is not None and time is not None else ""
        super().__init__(f"{message}{where}")


class GuardViolation(NumericAbort):
    """Enstrophy exceeded enstrophy_guard times its initial value."""


class StabilityError(NumericAbort):
    """Time step above the explicit stability limit under the abort policy."""


class SnapshotFormatError(SimulationError):
    """Malformed snapshot file."""

    exit_code = EXIT_IO


class ArtifactIOError(SimulationError):
    """Failure writing or reading run artifacts."""

    exit_code = EXIT_IO

"""Exception hierarchy shared by the lab modules.

Only genuine failures are raised. Validation reports, empty root sets and
tangencies are returned as data.
"""

from __future__ import annotations

from typing import Any, Iterable, List, Optional


class LabError(Exception):
    """Base class for every error raised by the lab."""


class DomainError(LabError, ValueError):
    """An argument lies outside the set on which a function is defined."""


class PositivityError(LabError):
    """A cell value of ``eta`` or ``theta`` dropped to (or below) its floor."""

    def __init__(self, field: str, cell: int, value: float, message: Optional[str] = None):
        self.field = field
        self.cell = cell
        self.value = value
        super().__init__(message or f"{field} not positive at cell {cell}: {value!r}")


class SolverError(LabError):
    """A linear solve failed or its matrix lost diagonal dominance."""


class PicardNotConverged(SolverError):
    """The fixed-point loop of one step ran out of sweeps."""

    def __init__(self, sweeps: int, change: float):
        self.sweeps = sweeps
        self.change = change
        super().__init__(f"Picard loop did not converge in {sweeps} sweeps (last change {change:.3e})")


class StepFailure(LabError):
    """The time step fell below ``dt_min``; carries the last accepted state."""

    def __init__(self, message: str, last_state: Any = None, t: float = float("nan")):
        self.last_state = last_state
        self.t = t
        super().__init__(message)


class ConfigError(LabError):
    """One or more configuration problems, reported together."""

    def __init__(self, messages: Iterable[str] | str):
        if isinstance(messages, str):
            messages = [messages]
        self.messages: List[str] = list(messages)
        super().__init__("; ".join(self.messages))


class ExpressionError(ConfigError):
    """An expression string uses something outside the arithmetic grammar."""


class ClassificationError(LabError):
    """Cells whose level has no root cannot be assigned a stationary value."""

    def __init__(self, cells: List[int]):
        self.cells = list(cells)
        super().__init__(f"no root available for cells {self.cells}")

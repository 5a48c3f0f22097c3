"""
utils/errors.py
---------------
Exception hierarchy for the planner.

Every error carries the CLI exit code it maps to, so ``cli.py`` can turn any
``PlannerError`` into a process status without a lookup table of its own.
Validation findings are *not* errors: they are returned as report entries.
"""

from __future__ import annotations

# =========================
# Exit codes (documented in readme.md)
# =========================
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_SCENARIO = 3
EXIT_INFEASIBLE = 4
EXIT_SCHEDULING = 5
EXIT_VALIDATION = 6


class PlannerError(Exception):
    """Base class for every failure the planner reports on purpose."""

    exit_code: int = EXIT_UNEXPECTED


class ScenarioError(PlannerError):
    """Scenario file could not be parsed or broke one of its invariants."""

    exit_code = EXIT_SCENARIO


class ContractViolationError(PlannerError, ValueError):
    """A caller broke a documented precondition (e.g. decode outside [-π/2, π/2])."""

    exit_code = EXIT_UNEXPECTED


class InfeasibleSetupError(PlannerError):
    """The optimizer cannot start: start/goal inside an obstacle or out of bounds."""

    exit_code = EXIT_INFEASIBLE


class InfeasibleShapeError(PlannerError):
    """A reconfiguration shape breaks the minimum-separation rule."""

    exit_code = EXIT_INFEASIBLE


class SchedulingError(PlannerError):
    """A reconfiguration window cannot be placed on the centroid path."""

    exit_code = EXIT_SCHEDULING


class SchedulingConflictError(SchedulingError):
    """Reconfiguration windows of two IWPs overlap in time."""

    def __init__(self, message: str, conflicts: list[tuple[int, int]] | None = None):
        super().__init__(message)
        self.conflicts = conflicts or []


class PassageMissedError(SchedulingError):
    """The centroid path never enters an IWP's passage zone."""

"""Exception hierarchy shared by every selrand module.

Each error carries a machine-readable ``code`` and the CLI exit status it
maps to. Payloads stay on the instance so callers can inspect them.
"""

from __future__ import annotations

from collections.abc import Iterable

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SPEC = 4
EXIT_COMPUTATION = 5


class SelrandError(Exception):
    """Base class for all errors raised by selrand."""

    code = "SelrandError"
    exit_code = EXIT_COMPUTATION

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)


class UsageError(SelrandError):
    code = "UsageError"
    exit_code = EXIT_USAGE


class SpecParseError(SelrandError):
    code = "SpecParseError"
    exit_code = EXIT_SPEC


class DataSchemaError(SelrandError):
    """Raised when an input table does not follow the documented layout."""

    code = "DataSchemaError"
    exit_code = EXIT_DATA

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class InsufficientUnits(SelrandError):
    code = "InsufficientUnits"
    exit_code = EXIT_DATA

    def __init__(self, group: str, needed: int, available: int):
        self.group = group
        self.needed = needed
        self.available = available
        super().__init__(f"group {group!r} needs {needed} units, only {available} available")


class InfeasibleAssignment(SelrandError):
    code = "InfeasibleAssignment"

    def __init__(self, stage: int, reason: str):
        self.stage = stage
        super().__init__(f"stage {stage}: {reason}")


class NotImputable(SelrandError):
    """An outcome cell needed for a computation is unknown under the null."""

    code = "NotImputable"

    def __init__(self, cells: Iterable[tuple[int, int]]):
        self.cells = sorted(set(cells))
        shown = ", ".join(f"(unit {u}, arm {a})" for u, a in self.cells[:5])
        more = f" and {len(self.cells) - 5} more" if len(self.cells) > 5 else ""
        super().__init__(f"unknown outcome cells demanded: {shown}{more}")


class SpaceTooLarge(SelrandError):
    code = "SpaceTooLarge"

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"assignment space has {count} elements, cap is {cap}")


class BudgetExhausted(SelrandError):
    code = "BudgetExhausted"

    def __init__(self, accepted: int, attempts: int):
        self.accepted = accepted
        self.attempts = attempts
        super().__init__(f"accepted {accepted} samples after {attempts} proposals")


class DegenerateVariance(SelrandError):
    code = "DegenerateVariance"


class EmptyArm(SelrandError):
    code = "EmptyArm"


class ZeroDenominator(SelrandError):
    code = "ZeroDenominator"


class ChainTooShort(SelrandError):
    code = "ChainTooShort"


class NoBracket(SelrandError):
    code = "NoBracket"

    def __init__(self, message: str, p_lo: float, p_hi: float):
        self.p_lo = p_lo
        self.p_hi = p_hi
        super().__init__(message)


class Undefined(SelrandError):
    """The Hodges-Lehmann estimate has an empty side on the evaluated grid."""

    code = "Undefined"

    def __init__(self, side: str):
        self.side = side
        super().__init__(f"no grid point on the {side} side of level 1/2")

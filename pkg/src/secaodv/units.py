"""Fixed-point simulation time.

All simulation clocks are integer microseconds so event ordering never
depends on float rounding.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation

US_PER_MS = 1_000
US_PER_S = 1_000_000


def from_seconds(value: str | int | float | Decimal) -> int:
    """Convert a seconds value to integer microseconds, exactly for decimal strings."""
    try:
        d = Decimal(str(value)) if not isinstance(value, Decimal) else value
    except InvalidOperation as exc:
        raise ValueError(f"not a number: {value!r}") from exc
    if not d.is_finite():
        raise ValueError(f"not a finite number: {value!r}")
    return int((d * US_PER_S).to_integral_value())


def format_seconds(us: int) -> str:
    return f"{us // US_PER_S}.{us % US_PER_S:06d}"


# Energy is kept in integer microjoules so the ledger audit can be exact.
UJ_PER_J = 1_000_000


def joules_to_uj(value: str | int | float | Decimal) -> int:
    return from_seconds(value)


def format_joules(uj: int) -> str:
    return f"{uj // UJ_PER_J}.{uj % UJ_PER_J:06d}"

"""Fixed-point PCU quantities.

Every occupancy, capacity, counter and turn rate is an ``int`` holding the
value multiplied by ``SCALE`` (five decimal digits). Arithmetic on them is
plain integer arithmetic, so simulations are exact and reproducible.
"""

from __future__ import annotations

import re

SCALE = 100_000
DIGITS = 5
INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

Pcu = int

_DECIMAL = re.compile(r"^([+-]?)(\d+)(?:\.(\d*))?$")


class PcuOverflowError(ArithmeticError):
    """Raised when a fixed-point value leaves the signed 64-bit range."""


def pcu_from_decimal(text: str) -> Pcu:
    """Parse a decimal string such as ``"0.5"`` into a scaled integer.

    More than five fractional digits is rejected instead of rounded.
    """
    match = _DECIMAL.match(text.strip())
    if match is None:
        raise ValueError(f"not a decimal number: {text!r}")
    sign, whole, frac = match.groups()
    frac = frac or ""
    if len(frac) > DIGITS:
        raise ValueError(
            f"{text!r} has {len(frac)} fractional digits; at most {DIGITS} allowed"
        )
    value = int(whole) * SCALE + int(frac.ljust(DIGITS, "0"))
    value = -value if sign == "-" else value
    return check_int64(value)


def pcu_to_decimal(value: Pcu) -> str:
    """Render a scaled integer with exactly five fractional digits."""
    sign = "-" if value < 0 else ""
    whole, frac = divmod(abs(value), SCALE)
    return f"{sign}{whole}.{frac:0{DIGITS}d}"


def check_int64(value: int) -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise PcuOverflowError(f"value {value} overflows signed 64-bit range")
    return value

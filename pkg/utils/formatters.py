"""
Formatters Module
Number formatting and progress/status output for the command line.
"""
import sys
from fractions import Fraction
from typing import Iterable, Optional, Union

SIGNIFICANT_DIGITS = 9

_quiet = False


def set_quiet(quiet: bool):
    """Silence (or re-enable) progress output."""
    global _quiet
    _quiet = quiet


def format_number(value: Optional[Union[float, int, Fraction]]) -> str:
    """
    Format a number with the fixed number of significant digits.

    Args:
        value: Number to format (None renders as an empty string)

    Returns:
        Formatted string, e.g. 0.666666667 or 1.6777216e+07
    """
    if value is None:
        return ""
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def format_row(values: Iterable, sep: str = "\t") -> str:
    """Join numbers and labels into one output line."""
    parts = []
    for value in values:
        if isinstance(value, (int, float, Fraction)) and not isinstance(value, bool):
            parts.append(format_number(value))
        else:
            parts.append(str(value))
    return sep.join(parts)


def format_fraction(value: Optional[Fraction]) -> str:
    """Render an exact exponent as p/q (or 'none')."""
    if value is None:
        return "none"
    return str(Fraction(value))


def _emit(message: str):
    if not _quiet:
        print(message, file=sys.stderr)


def print_banner(title: str, width: int = 60):
    _emit("\n" + "=" * width)
    _emit(title)
    _emit("=" * width)


def print_status(message: str):
    _emit(f"✓ {message}")


def print_warning(message: str):
    _emit(f"  ⚠ {message}")


def print_failure(message: str):
    _emit(f"✗ {message}")

"""
Validators Module
Argument and range checks shared by the command line and the spec loader.
"""
import math
from typing import List, Sequence, Tuple


class ValidationError(Exception):
    """Custom exception for invalid user input"""
    pass


MIN_SCAN_LAMBDA = 2.0 ** 4


def parse_exponent_range(text: str) -> List[float]:
    """
    Parse a dyadic range written as 'a:b' into [2^a, 2^(a+1), ..., 2^b].

    Args:
        text: Range such as '10:24' (a single '12' gives one value)

    Returns:
        List of powers of two

    Raises:
        ValidationError: If the range is malformed or empty
    """
    try:
        if ":" in text:
            low, high = (int(part) for part in text.split(":"))
        else:
            low = high = int(text)
    except ValueError:
        raise ValidationError(f"Invalid dyadic range '{text}' (expected a:b)")
    if high < low:
        raise ValidationError(f"Empty dyadic range '{text}'")
    return [2.0 ** k for k in range(low, high + 1)]


def validate_scan_lambdas(lambdas: Sequence[float]) -> List[float]:
    """
    Check that scan parameters are >= 2^4, strictly increasing and dyadic.

    Raises:
        ValidationError: If any condition fails
    """
    values = [float(value) for value in lambdas]
    if not values:
        raise ValidationError("No lambda values given")
    for value in values:
        if value < MIN_SCAN_LAMBDA:
            raise ValidationError(f"lambda = {value} is below the scan minimum 2^4")
    for previous, current in zip(values, values[1:]):
        if current <= previous:
            raise ValidationError("lambda values must be strictly increasing")
        if abs(math.log2(current / previous) - round(math.log2(current / previous))) > 1e-9:
            raise ValidationError("lambda values must be dyadically spaced")
    return values


def validate_radius(value: float, name: str = "R") -> float:
    """Fiber radius parameters must satisfy R >= 1."""
    if not value >= 1.0:
        raise ValidationError(f"{name} must be >= 1 (got {value})")
    return float(value)


def validate_positive_int(value: int, name: str) -> int:
    if int(value) < 1:
        raise ValidationError(f"{name} must be a positive integer (got {value})")
    return int(value)


def parse_point(text: str, dimension: int) -> Tuple[List[str], List[str]]:
    """
    Parse a phase point written as 'x1,...,xd;xi1,...,xid'.

    Components stay expression strings (they may contain 'lam').

    Raises:
        ValidationError: If the point does not have d base and d fiber entries
    """
    if ";" not in text:
        raise ValidationError(f"Point '{text}' must separate base and fiber with ';'")
    base_text, fiber_text = text.split(";", 1)
    base = [part.strip() for part in base_text.split(",") if part.strip()]
    fiber = [part.strip() for part in fiber_text.split(",") if part.strip()]
    if len(base) != dimension or len(fiber) != dimension:
        raise ValidationError(
            f"Point '{text}' needs {dimension} base and {dimension} fiber components"
        )
    return base, fiber


def parse_base_point(text: str, dimension: int) -> List[str]:
    """Parse a base point written as 'x1,...,xd'."""
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if len(parts) != dimension:
        raise ValidationError(f"Base point '{text}' needs {dimension} components")
    return parts

"""Exact and floating point number helpers.

This module provides functions for:
- parsing rationals written as "p/q" strings, ints or floats
- converting exact sympy values to floats
- primitivity checks for integral vectors
"""

import math
from functools import lru_cache, reduce
from typing import Any, List, Sequence, Tuple

import sympy as sp

from .exceptions import ValidationError

Number = Any  # sympy.Rational or float


@lru_cache(maxsize=256)
def _parse_string(text: str) -> sp.Rational:
    try:
        value = sp.Rational(text.strip())
    except (TypeError, ValueError, SyntaxError) as e:
        raise ValidationError(f"Cannot parse '{text}' as a rational number") from e
    return value


def parse_rational(value: Any) -> sp.Rational:
    """Parse a number written as int, "p/q" string, decimal string or float.

    Floats are converted through their shortest decimal representation, so
    0.5 becomes 1/2 and 0.1 becomes 1/10.

    Args:
        value: Input value

    Returns:
        Exact sympy Rational

    Raises:
        ValidationError: If the value cannot be parsed
    """
    if isinstance(value, bool):
        raise ValidationError(f"Boolean {value!r} is not a number")
    if isinstance(value, sp.Rational):
        return value
    if isinstance(value, int):
        return sp.Integer(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValidationError(f"Non-finite value {value!r}")
        return _parse_string(repr(value))
    if isinstance(value, str):
        return _parse_string(value)
    raise ValidationError(f"Unsupported number type {type(value).__name__}")


def is_exact(value: Any) -> bool:
    """True for sympy Rationals and Python ints."""
    return isinstance(value, (sp.Rational, int)) and not isinstance(value, bool)


def to_float(value: Any) -> float:
    return float(value)


def is_primitive(vector: Sequence[int]) -> bool:
    """Check that an integral vector has gcd 1."""
    return reduce(math.gcd, (abs(int(v)) for v in vector), 0) == 1


def rational_normal(direction: Sequence[Any]) -> Tuple[List[int], sp.Rational]:
    """Scale a rational direction to the primitive integral vector it spans.

    Args:
        direction: Non-zero rational vector

    Returns:
        (primitive integral vector, positive factor) with vector = factor * direction
    """
    exact = [parse_rational(v) for v in direction]
    lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (int(v.q) for v in exact), 1)
    ints = [int(v * lcm) for v in exact]
    g = reduce(math.gcd, (abs(i) for i in ints), 0)
    if g == 0:
        raise ValidationError("Zero direction has no primitive normal")
    return [i // g for i in ints], sp.Rational(lcm, g)

"""
Parameter families of measured polytopes for sweeps.
"""

import logging
from typing import Any, Callable, Dict, List

from .core.exceptions import ValidationError
from .core.number_utils import parse_rational, rational_normal
from .decomposition import trapezium_mp
from .geometry import Facet, MeasuredPolytope

logger = logging.getLogger(__name__)


def interval_mp(a: Any) -> MeasuredPolytope:
    """[0, 1] with weight a at 0 and weight 1 at 1."""
    a = parse_rational(a)
    if a < 0:
        raise ValidationError(f"Endpoint weight must be non-negative, got {a}")
    return MeasuredPolytope(
        [Facet([1], 0, a), Facet([-1], -1, 1)],
        name=f"interval_a{a}",
        resolution=32,
    )


def long_thin_mp(length: Any) -> MeasuredPolytope:
    """The quadrilateral with vertices (0,0), (L,0), (L,1), (0,2), all weights 1."""
    length = parse_rational(length)
    if length <= 0:
        raise ValidationError(f"Length must be positive, got {length}")
    top, factor = rational_normal([-1 / length, -1])
    facets = [
        Facet([1, 0], 0),
        Facet([0, 1], 0),
        Facet([-1, 0], -length),
        Facet(top, -2 * factor),
    ]
    return MeasuredPolytope(facets, name=f"long_thin_L{length}")


class Family:
    """
    A named one-parameter family.

    Attributes:
        name: Family name used on the command line
        parameter: Name of the parameter
        builder: Callable from the parameter to a MeasuredPolytope
        modes: Density modes analysed for each member
    """

    def __init__(self, name: str, parameter: str, builder: Callable[[Any], MeasuredPolytope], modes: List[str]):
        self.name = name
        self.parameter = parameter
        self.builder = builder
        self.modes = modes

    def build(self, value: Any) -> MeasuredPolytope:
        mp = self.builder(value)
        logger.debug(f"Built {self.name} member {self.parameter} = {value}")
        return mp


FAMILIES: Dict[str, Family] = {
    "trapezium": Family("trapezium", "l", trapezium_mp, ["extremal"]),
    "interval": Family("interval", "a", interval_mp, ["constant", "extremal"]),
    "long_thin": Family("long_thin", "L", long_thin_mp, ["constant"]),
}


def get_family(name: str) -> Family:
    """
    Look up a family by name.

    Raises:
        ValidationError: If the family is unknown
    """
    if name not in FAMILIES:
        raise ValidationError(f"Unknown family {name!r}; choose from {', '.join(sorted(FAMILIES))}")
    return FAMILIES[name]

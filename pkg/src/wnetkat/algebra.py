"""Weight structures over the extended non-negative rationals.

Weights are exact: finite values are :class:`fractions.Fraction` and the two
unbounded values are the singletons :data:`INF` and :data:`NEG_INF`.  Only the
max-plus structure ever produces ``NEG_INF`` (it is that structure's zero).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import total_ordering
from typing import Callable, Union


@total_ordering
class Infinity:
    """Signed infinity that compares against ints and Fractions."""

    __slots__ = ("sign",)

    def __init__(self, sign: int) -> None:
        object.__setattr__(self, "sign", sign)

    def __setattr__(self, name, value):
        raise AttributeError("Infinity is immutable")

    def __repr__(self) -> str:
        return "INF" if self.sign > 0 else "NEG_INF"

    def __str__(self) -> str:
        return "inf" if self.sign > 0 else "-inf"

    def __hash__(self) -> int:
        return hash(("inf", self.sign))

    def __eq__(self, other) -> bool:
        return isinstance(other, Infinity) and other.sign == self.sign

    def __lt__(self, other) -> bool:
        if isinstance(other, Infinity):
            return self.sign < other.sign
        if isinstance(other, (int, Fraction)):
            return self.sign < 0
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Infinity) and other.sign != self.sign:
            raise ArithmeticError("inf + -inf is undefined")
        if isinstance(other, (int, Fraction, Infinity)):
            return self
        return NotImplemented

    __radd__ = __add__

    def __reduce__(self):
        return (Infinity, (self.sign,))


INF = Infinity(1)
NEG_INF = Infinity(-1)

Weight = Union[Fraction, Infinity]

_NUMBER = re.compile(r"^\d+(\.\d+)?$|^\d+/\d+$")


def as_weight(value) -> Weight:
    """Coerce ints, Fractions, decimal strings and ``inf`` into a Weight."""
    if isinstance(value, Infinity):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not weights")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return parse_weight(value)
    raise TypeError(f"cannot interpret {value!r} as a weight")


def parse_weight(text: str) -> Weight:
    """Parse ``4``, ``2.5``, ``5/2`` or ``inf`` exactly.

    >>> parse_weight("2.5")
    Fraction(5, 2)
    """
    text = text.strip()
    if text == "inf":
        return INF
    if text == "-inf":
        return NEG_INF
    if not _NUMBER.match(text):
        raise ValueError(f"malformed weight {text!r}")
    return Fraction(text)


def format_weight(w: Weight) -> str:
    """Inverse of :func:`parse_weight`; prefers decimal notation."""
    if isinstance(w, Infinity):
        return str(w)
    if w.denominator == 1:
        return str(w.numerator)
    d = w.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        with localcontext() as ctx:
            ctx.prec = 80
            dec = Decimal(w.numerator) / Decimal(w.denominator)
        return format(dec.normalize(), "f")
    return f"{w.numerator}/{w.denominator}"


class StructureKind(enum.Enum):
    MIN_PLUS = "min-plus"
    MAX_PLUS = "max-plus"
    MAX_MIN = "max-min"
    ADD_MIN = "add-min"


def _add(a: Weight, b: Weight) -> Weight:
    return a + b


def _plus_max_plus(a: Weight, b: Weight) -> Weight:
    return max(a, b)


def _times_max_plus(a: Weight, b: Weight) -> Weight:
    # NEG_INF annihilates, even against INF
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


@dataclass(frozen=True)
class WeightStructure:
    """A semiring or strong bimonoid ``(K, plus, times, zero, one)``."""

    kind: StructureKind
    plus_op: Callable[[Weight, Weight], Weight]
    times_op: Callable[[Weight, Weight], Weight]
    zero: Weight
    one: Weight
    is_semiring: bool

    @property
    def idempotent(self) -> bool:
        return self.kind is not StructureKind.ADD_MIN

    def plus(self, a: Weight, b: Weight) -> Weight:
        return self.plus_op(a, b)

    def times(self, a: Weight, b: Weight) -> Weight:
        return self.times_op(a, b)

    def sum(self, weights) -> Weight:
        acc = self.zero
        for w in weights:
            acc = self.plus_op(acc, w)
        return acc

    def product(self, weights) -> Weight:
        acc = self.one
        for w in weights:
            acc = self.times_op(acc, w)
        return acc

    def better(self, a: Weight, b: Weight) -> bool:
        """True when ``a`` strictly improves on ``b`` under an idempotent plus."""
        return a != b and self.plus_op(a, b) == a


_STRUCTURES = {
    StructureKind.MIN_PLUS: WeightStructure(StructureKind.MIN_PLUS, min, _add, INF, Fraction(0), True),
    StructureKind.MAX_PLUS: WeightStructure(
        StructureKind.MAX_PLUS, _plus_max_plus, _times_max_plus, NEG_INF, Fraction(0), True
    ),
    StructureKind.MAX_MIN: WeightStructure(StructureKind.MAX_MIN, max, min, Fraction(0), INF, True),
    StructureKind.ADD_MIN: WeightStructure(StructureKind.ADD_MIN, _add, min, Fraction(0), INF, False),
}


def make_structure(kind: StructureKind | str) -> WeightStructure:
    """Return the built-in structure for ``kind`` (enum member or its name)."""
    if isinstance(kind, str):
        kind = StructureKind(kind)
    return _STRUCTURES[kind]


def plus(s: WeightStructure, a: Weight, b: Weight) -> Weight:
    return s.plus(a, b)


def times(s: WeightStructure, a: Weight, b: Weight) -> Weight:
    return s.times(a, b)


def monus(a: Weight, b: Weight) -> Weight:
    """Truncated subtraction ``max(0, a - b)``."""
    if isinstance(b, Infinity):
        if b.sign > 0:
            return Fraction(0)
        raise ArithmeticError("cannot subtract -inf")
    if isinstance(a, Infinity):
        return a
    return max(Fraction(0), a - b)

"""WNetKAT abstract syntax.

Expressions are immutable and hash-consed by structure.  ``&`` (the KA sum)
is :class:`Union`, ``;`` is :class:`Seq`.  Source spans are carried along but
never take part in equality.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence, Union as TUnion

from .algebra import Infinity, Weight, as_weight, format_weight, monus
from .core import FieldId, FieldKind, Scope, Value, WNetKATError, check_value


class IllFormed(WNetKATError):
    """Raised for expressions that violate the two-sorted discipline."""


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}"


_FIELD_CACHE: dict[type, tuple[str, ...]] = {}


class Expr:
    """Base class of all expression nodes."""

    def _names(self) -> tuple[str, ...]:
        cls = type(self)
        names = _FIELD_CACHE.get(cls)
        if names is None:
            names = tuple(f.name for f in fields(cls) if f.compare)
            _FIELD_CACHE[cls] = names
        return names

    def _key(self) -> tuple:
        return tuple(getattr(self, n) for n in self._names())

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if type(other) is not type(self):
            return NotImplemented if not isinstance(other, Expr) else False
        return hash(self) == hash(other) and self._key() == other._key()

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((type(self).__name__,) + self._key())
            object.__setattr__(self, "_hash", h)
        return h

    def children(self) -> tuple["Expr", ...]:
        return ()

    def walk(self) -> Iterator["Expr"]:
        stack = [self]
        while stack:
            e = stack.pop()
            yield e
            stack.extend(reversed(e.children()))

    def __str__(self) -> str:
        from .parser import render_expr

        return render_expr(self, header=False)

    # operator sugar used by builders and tests
    def __and__(self, other: "Expr") -> "Expr":
        return Union(self, other)

    def __rshift__(self, other: "Expr") -> "Expr":
        return Seq(self, other)

    def __invert__(self) -> "Expr":
        return Not(self)


_span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class Drop(Expr):
    span: Optional[SourceSpan] = _span


@dataclass(frozen=True, eq=False)
class Skip(Expr):
    span: Optional[SourceSpan] = _span


@dataclass(frozen=True, eq=False)
class Dup(Expr):
    span: Optional[SourceSpan] = _span


class Comparator(enum.Enum):
    LT = "<"
    GT = ">"
    LE = "<="
    GE = ">="
    EQ = "="

    def holds(self, a: Weight, b: Weight) -> bool:
        if self is Comparator.LT:
            return a < b
        if self is Comparator.GT:
            return a > b
        if self is Comparator.LE:
            return a <= b
        if self is Comparator.GE:
            return a >= b
        return a == b

    def flipped(self) -> "Comparator":
        """The comparator with its operands swapped."""
        return {
            Comparator.LT: Comparator.GT,
            Comparator.GT: Comparator.LT,
            Comparator.LE: Comparator.GE,
            Comparator.GE: Comparator.LE,
            Comparator.EQ: Comparator.EQ,
        }[self]


@dataclass(frozen=True)
class LinearTerm:
    """``sum(coeff * var) + constant`` evaluated with truncation at zero.

    ``terms`` is kept sorted by field name with merged, non-zero coefficients,
    so structurally equal terms compare equal.  Negative coefficients and
    constants encode subtraction (monus).
    """

    terms: tuple[tuple[FieldId, Fraction], ...] = ()
    constant: Weight = Fraction(0)

    @classmethod
    def of(cls, parts: Iterable[tuple[FieldId, Fraction | int]] = (), constant=0) -> "LinearTerm":
        acc: dict[FieldId, Fraction] = {}
        for f, c in parts:
            if not f.quantitative:
                raise IllFormed(f"field {f.name} is symbolic and cannot appear in arithmetic")
            acc[f] = acc.get(f, Fraction(0)) + Fraction(c)
        terms = tuple(sorted(((f, c) for f, c in acc.items() if c != 0), key=lambda fc: (fc[0].name, fc[0])))
        const = constant if isinstance(constant, Infinity) else Fraction(constant)
        return cls(terms, const)

    @classmethod
    def var(cls, f: FieldId) -> "LinearTerm":
        return cls.of([(f, 1)])

    @classmethod
    def const(cls, k) -> "LinearTerm":
        return cls((), as_weight(k) if not isinstance(k, Fraction) else k)

    def __add__(self, other: "LinearTerm") -> "LinearTerm":
        return LinearTerm.of(self.terms + other.terms, self.constant + other.constant)

    def scaled(self, k: Fraction) -> "LinearTerm":
        return LinearTerm.of([(f, c * k) for f, c in self.terms], self.constant * k)

    def __neg__(self) -> "LinearTerm":
        return self.scaled(Fraction(-1))

    @property
    def fields(self) -> tuple[FieldId, ...]:
        return tuple(f for f, _ in self.terms)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def single_var(self) -> Optional[FieldId]:
        if len(self.terms) == 1 and self.terms[0][1] == 1 and self.constant == 0:
            return self.terms[0][0]
        return None

    def evaluate(self, lookup) -> Weight:
        """Evaluate with ``lookup(field) -> Weight``; the result is clamped at 0."""
        pos: Weight = Fraction(0)
        neg: Weight = Fraction(0)
        for f, c in self.terms:
            v = lookup(f)
            if c > 0:
                pos = pos + (v if c == 1 or isinstance(v, Infinity) else c * v)
            else:
                neg = neg + (v if c == -1 or isinstance(v, Infinity) else -c * v)
        k = self.constant
        if isinstance(k, Infinity) or k >= 0:
            pos = pos + k
        else:
            neg = neg + (-k)
        return monus(pos, neg)

    def __str__(self) -> str:
        from .parser import render_linear

        return render_linear(self)


Operand = TUnion[FieldId, LinearTerm, int, Fraction, Infinity, str]


def as_linear(x: Operand) -> LinearTerm:
    if isinstance(x, LinearTerm):
        return x
    if isinstance(x, FieldId):
        return LinearTerm.var(x)
    return LinearTerm.const(as_weight(x))


@dataclass(frozen=True, eq=False)
class TestEq(Expr):
    __test__ = False  # not a pytest class

    field: FieldId
    value: Value
    span: Optional[SourceSpan] = _span

    def __post_init__(self):
        if self.field.quantitative:
            raise IllFormed(f"use a quantitative test for {self.field.name}")
        check_value(self.field, self.value)


@dataclass(frozen=True, eq=False)
class Assign(Expr):
    field: FieldId
    value: Value
    span: Optional[SourceSpan] = _span

    def __post_init__(self):
        if self.field.quantitative:
            raise IllFormed(f"use a quantitative assignment for {self.field.name}")
        check_value(self.field, self.value)


@dataclass(frozen=True, eq=False)
class QAssign(Expr):
    field: FieldId
    rhs: LinearTerm
    span: Optional[SourceSpan] = _span

    def __post_init__(self):
        if not self.field.quantitative:
            raise IllFormed(f"field {self.field.name} is symbolic")


@dataclass(frozen=True, eq=False)
class QTest(Expr):
    lhs: LinearTerm
    cmp: Comparator
    rhs: LinearTerm
    span: Optional[SourceSpan] = _span


@dataclass(frozen=True, eq=False)
class Not(Expr):
    arg: Expr
    span: Optional[SourceSpan] = _span

    def __post_init__(self):
        if not is_predicate(self.arg):
            raise IllFormed("negation applies to predicates only")

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=False)
class Union(Expr):
    left: Expr
    right: Expr
    span: Optional[SourceSpan] = _span

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Seq(Expr):
    left: Expr
    right: Expr
    span: Optional[SourceSpan] = _span

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class Star(Expr):
    arg: Expr
    span: Optional[SourceSpan] = _span

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=False)
class Enq(Expr):
    queue: str
    switch: str
    span: Optional[SourceSpan] = _span


@dataclass(frozen=True, eq=False)
class Deq(Expr):
    queue: str
    switch: str
    span: Optional[SourceSpan] = _span


@dataclass(frozen=True, eq=False)
class QEmpty(Expr):
    """Predicate: queue ``queue@switch`` holds no packet."""

    queue: str
    switch: str
    span: Optional[SourceSpan] = _span


DROP = Drop()
SKIP = Skip()
DUP = Dup()

ATOMS = (Drop, Skip, Dup, TestEq, Assign, QAssign, QTest, Enq, Deq, QEmpty)


def seq(*es: Expr) -> Expr:
    """Left-associated sequence; the empty sequence is ``skip``."""
    if not es:
        return SKIP
    acc = es[0]
    for e in es[1:]:
        acc = Seq(acc, e)
    return acc


def union(*es: Expr) -> Expr:
    """Left-associated union; the empty union is ``drop``."""
    if not es:
        return DROP
    acc = es[0]
    for e in es[1:]:
        acc = Union(acc, e)
    return acc


def flatten_seq(e: Expr) -> list[Expr]:
    if isinstance(e, Seq):
        return flatten_seq(e.left) + flatten_seq(e.right)
    return [e]


def flatten_union(e: Expr) -> list[Expr]:
    if isinstance(e, Union):
        return flatten_union(e.left) + flatten_union(e.right)
    return [e]


def test(f: FieldId, v) -> Expr:
    """``f = v`` for either kind of field."""
    if f.quantitative:
        return QTest(LinearTerm.var(f), Comparator.EQ, as_linear(v))
    return TestEq(f, v)


def assign(f: FieldId, v) -> Expr:
    """``f <- v``; assigning a quantitative field to itself is ``skip``."""
    if f.quantitative:
        rhs = as_linear(v)
        if rhs.single_var() == f:
            return SKIP
        return QAssign(f, rhs)
    return Assign(f, v)


def compare(a: Operand, cmp: Comparator | str, b: Operand) -> QTest:
    return QTest(as_linear(a), Comparator(cmp), as_linear(b))


# ---------------------------------------------------------------------------
# min / max desugaring


@dataclass(frozen=True)
class MinMax:
    """An unexpanded ``min{..}`` / ``max{..}`` right-hand side."""

    op: str  # "min" | "max"
    args: tuple

    def __post_init__(self):
        if self.op not in ("min", "max") or len(self.args) < 2:
            raise IllFormed("min/max need at least two operands")


Rhs = TUnion[LinearTerm, MinMax]


def rhs_cases(rhs: Rhs) -> list[tuple[tuple[Expr, ...], LinearTerm]]:
    """Split a min/max tree into guarded linear cases."""
    if isinstance(rhs, LinearTerm):
        return [((), rhs)]
    acc = rhs_cases(rhs.args[0])
    take_left, take_right = (
        (Comparator.LE, Comparator.GT) if rhs.op == "min" else (Comparator.GE, Comparator.LT)
    )
    for arg in rhs.args[1:]:
        nxt = []
        for ga, ta in acc:
            for gb, tb in rhs_cases(arg):
                nxt.append((ga + gb + (QTest(ta, take_left, tb),), ta))
                nxt.append((ga + gb + (QTest(ta, take_right, tb),), tb))
        acc = nxt
    return acc


def assign_rhs(x: FieldId, rhs: Rhs) -> Expr:
    if isinstance(rhs, LinearTerm):
        return assign(x, rhs)
    return union(*(seq(*guards, assign(x, t)) for guards, t in rhs_cases(rhs)))


def test_rhs(lhs: LinearTerm, cmp: Comparator, rhs: Rhs) -> Expr:
    if isinstance(rhs, LinearTerm):
        return QTest(lhs, cmp, rhs)
    return union(*(seq(*guards, QTest(lhs, cmp, t)) for guards, t in rhs_cases(rhs)))


def _check_quant_operand(x: Operand) -> LinearTerm:
    if isinstance(x, FieldId) and not x.quantitative:
        raise IllFormed(f"min/max operand {x.name} is symbolic")
    if isinstance(x, str):
        raise IllFormed(f"min/max operand {x!r} is a symbol")
    return as_linear(x)


def desugar_min(x: FieldId, a: Operand, b: Operand) -> Expr:
    """``x <- min{a, b}`` as ``(a<=b; x<-a) & (a>b; x<-b)``."""
    if not x.quantitative:
        raise IllFormed(f"min assigns to symbolic field {x.name}")
    return assign_rhs(x, MinMax("min", (_check_quant_operand(a), _check_quant_operand(b))))


def desugar_max(x: FieldId, a: Operand, b: Operand) -> Expr:
    """``x <- max{a, b}`` as ``(a>=b; x<-a) & (a<b; x<-b)``."""
    if not x.quantitative:
        raise IllFormed(f"max assigns to symbolic field {x.name}")
    return assign_rhs(x, MinMax("max", (_check_quant_operand(a), _check_quant_operand(b))))


# ---------------------------------------------------------------------------
# queries over expressions


def is_predicate(e: Expr) -> bool:
    """True iff ``e`` lies in the Boolean fragment (tests, &, ;, !, 0, 1)."""
    if isinstance(e, (Drop, Skip, TestEq, QTest, QEmpty, Not)):
        return True
    if isinstance(e, (Union, Seq)):
        return is_predicate(e.left) and is_predicate(e.right)
    return False


def fields_of(e: Expr) -> set[FieldId]:
    out: set[FieldId] = set()
    for node in e.walk():
        if isinstance(node, (TestEq, Assign)):
            out.add(node.field)
        elif isinstance(node, QAssign):
            out.add(node.field)
            out.update(node.rhs.fields)
        elif isinstance(node, QTest):
            out.update(node.lhs.fields)
            out.update(node.rhs.fields)
    return out


def symbols_of(e: Expr) -> dict[str, set[str]]:
    """Symbols mentioned per symbolic field name."""
    out: dict[str, set[str]] = {}
    for node in e.walk():
        if isinstance(node, (TestEq, Assign)):
            out.setdefault(node.field.name, set()).add(node.value)
    return out


def has_queue_ops(e: Expr) -> bool:
    return any(isinstance(n, (Enq, Deq, QEmpty)) for n in e.walk())


def writes_switch_state(e: Expr) -> bool:
    return any(isinstance(n, (Assign, QAssign)) and n.field.is_switch for n in e.walk())


# ---------------------------------------------------------------------------
# normalisation by the directed packet axioms


def _packet_atom(e: Expr) -> bool:
    return isinstance(e, (TestEq, Assign)) and e.field.scope is Scope.PACKET


def _combine(a: Expr, b: Expr) -> Optional[list[Expr]]:
    """Rewrite the adjacent pair ``a; b`` or return None when no rule fires."""
    if isinstance(a, Skip):
        return [b]
    if isinstance(b, Skip):
        return [a]
    if not (_packet_atom(a) and _packet_atom(b)):
        return None
    if a.field == b.field:
        same = a.value == b.value
        if isinstance(a, Assign) and isinstance(b, TestEq):
            return [a] if same else [DROP]
        if isinstance(a, TestEq) and isinstance(b, Assign):
            return [a] if same else None
        if isinstance(a, Assign) and isinstance(b, Assign):
            return [b]
        return [a] if same else [DROP]
    if a.field.name > b.field.name:
        # distinct fields commute into name order
        return [b, a]
    return None


def _normalize_seq(items: list[Expr]) -> Expr:
    changed = True
    while changed:
        changed = False
        if any(isinstance(x, Drop) for x in items):
            return DROP
        for i in range(len(items) - 1):
            rewritten = _combine(items[i], items[i + 1])
            if rewritten is not None:
                items = items[:i] + rewritten + items[i + 2 :]
                changed = True
                break
    if any(isinstance(x, Drop) for x in items):
        return DROP
    return seq(*items) if items else SKIP


def normalize(e: Expr) -> Expr:
    """Apply the directed field axioms until a fixpoint is reached."""
    if isinstance(e, Seq):
        parts = [normalize(x) for x in flatten_seq(e)]
        flat: list[Expr] = []
        for p in parts:
            flat.extend(flatten_seq(p))
        return _normalize_seq(flat)
    if isinstance(e, Union):
        parts = [p for x in flatten_union(e) for p in flatten_union(normalize(x))]
        kept: list[Expr] = []
        for p in parts:
            if isinstance(p, Drop) or p in kept:
                continue
            kept.append(p)
        return union(*kept)
    if isinstance(e, Star):
        inner = normalize(e.arg)
        if isinstance(inner, (Drop, Skip)):
            return SKIP
        return Star(inner)
    if isinstance(e, Not):
        inner = normalize(e.arg)
        if isinstance(inner, Drop):
            return SKIP
        if isinstance(inner, Skip):
            return DROP
        return Not(inner)
    return e


# ---------------------------------------------------------------------------
# executable axiom suite

# Each law maps bindings to (lhs, rhs, relation) with relation "=" or "<=".
LAWS = {
    "plus-assoc": lambda b: (b["p"] & (b["q"] & b["r"]), (b["p"] & b["q"]) & b["r"], "="),
    "plus-comm": lambda b: (b["p"] & b["q"], b["q"] & b["p"], "="),
    "plus-zero": lambda b: (b["p"] & DROP, b["p"], "="),
    "plus-idem": lambda b: (b["p"] & b["p"], b["p"], "="),
    "seq-assoc": lambda b: (b["p"] >> (b["q"] >> b["r"]), (b["p"] >> b["q"]) >> b["r"], "="),
    "seq-one-left": lambda b: (SKIP >> b["p"], b["p"], "="),
    "seq-one-right": lambda b: (b["p"] >> SKIP, b["p"], "="),
    "seq-zero-left": lambda b: (DROP >> b["p"], DROP, "="),
    "seq-zero-right": lambda b: (b["p"] >> DROP, DROP, "="),
    "dist-left": lambda b: (b["p"] >> (b["q"] & b["r"]), (b["p"] >> b["q"]) & (b["p"] >> b["r"]), "="),
    "dist-right": lambda b: ((b["p"] & b["q"]) >> b["r"], (b["p"] >> b["r"]) & (b["q"] >> b["r"]), "="),
    "star-unfold-left": lambda b: (SKIP & (b["p"] >> Star(b["p"])), Star(b["p"]), "<="),
    "star-unfold-right": lambda b: (SKIP & (Star(b["p"]) >> b["p"]), Star(b["p"]), "<="),
    "ba-dist": lambda b: (b["a"] & (b["b"] >> b["c"]), (b["a"] & b["b"]) >> (b["a"] & b["c"]), "="),
    "ba-comm": lambda b: (b["a"] >> b["b"], b["b"] >> b["a"], "="),
    "ba-one": lambda b: (b["a"] & SKIP, SKIP, "="),
    "ba-excluded-middle": lambda b: (b["a"] & Not(b["a"]), SKIP, "="),
    "ba-contradiction": lambda b: (b["a"] >> Not(b["a"]), DROP, "="),
    "ba-idem": lambda b: (b["a"] >> b["a"], b["a"], "="),
    "ba-double-negation": lambda b: (Not(Not(b["a"])), b["a"], "="),
    "nk-assign-commute": lambda b: (
        Assign(b["f1"], b["w1"]) >> Assign(b["f2"], b["w2"]),
        Assign(b["f2"], b["w2"]) >> Assign(b["f1"], b["w1"]),
        "=",
    ),
    "nk-assign-test-commute": lambda b: (
        Assign(b["f1"], b["w1"]) >> TestEq(b["f2"], b["w2"]),
        TestEq(b["f2"], b["w2"]) >> Assign(b["f1"], b["w1"]),
        "=",
    ),
    "nk-test-dup": lambda b: (TestEq(b["f1"], b["w1"]) >> DUP, DUP >> TestEq(b["f1"], b["w1"]), "="),
    "nk-assign-test": lambda b: (
        Assign(b["f1"], b["w1"]) >> TestEq(b["f1"], b["w1"]),
        Assign(b["f1"], b["w1"]),
        "=",
    ),
    "nk-test-assign": lambda b: (
        TestEq(b["f1"], b["w1"]) >> Assign(b["f1"], b["w1"]),
        TestEq(b["f1"], b["w1"]),
        "=",
    ),
    "nk-assign-assign": lambda b: (
        Assign(b["f1"], b["w1"]) >> Assign(b["f1"], b["w2"]),
        Assign(b["f1"], b["w2"]),
        "=",
    ),
    "nk-test-test": lambda b: (TestEq(b["f1"], b["w1"]) >> TestEq(b["f1"], b["w2"]), DROP, "="),
    "nk-test-sum": lambda b: (union(*(TestEq(b["f1"], w) for w in b["domain"])), SKIP, "="),
}

#: Side conditions on bindings; a law does not apply when its condition fails.
LAW_CONDITIONS = {
    "nk-assign-commute": lambda b: b["f1"] != b["f2"],
    "nk-assign-test-commute": lambda b: b["f1"] != b["f2"],
    "nk-test-test": lambda b: b["w1"] != b["w2"],
}


class FuelExhausted(WNetKATError):
    """A star did not saturate within the allotted fuel."""


def law_sides(law: str, bindings: dict) -> tuple[Expr, Expr, str]:
    if law not in LAWS:
        raise KeyError(f"unknown law {law!r}")
    cond = LAW_CONDITIONS.get(law)
    if cond is not None and not cond(bindings):
        raise ValueError(f"bindings violate the side condition of {law}")
    return LAWS[law](bindings)


def axiom_holds(law: str, bindings: dict, worlds: Sequence, fuel: int = 16, max_dups: int | None = 3) -> bool:
    """Check ``law`` instantiated with ``bindings`` on every sample world.

    Raises :class:`FuelExhausted` if either side's star does not saturate.
    """
    lhs, rhs, rel = law_sides(law, bindings)
    return sides_agree(lhs, rhs, rel, worlds, fuel=fuel, max_dups=max_dups)


def sides_agree(lhs: Expr, rhs: Expr, rel: str, worlds: Sequence, fuel: int = 16, max_dups: int | None = 3) -> bool:
    from .evaluator import EvalConfig, evaluate

    cfg = EvalConfig(fuel=fuel, max_dups=max_dups)
    for w in worlds:
        left = evaluate(lhs, w, cfg)
        right = evaluate(rhs, w, cfg)
        if not (left.saturated and right.saturated):
            raise FuelExhausted(f"star did not saturate within fuel {fuel}")
        if rel == "=" and left.worlds != right.worlds:
            return False
        if rel == "<=" and not left.worlds <= right.worlds:
            return False
    return True


def random_expr(
    rng: random.Random,
    fields_: Sequence[FieldId],
    domain: Sequence[str],
    depth: int = 4,
    predicate: bool = False,
) -> Expr:
    """Random expression of bounded depth over symbolic packet fields."""
    if depth <= 0 or rng.random() < 0.3:
        f = rng.choice(fields_)
        v = rng.choice(domain)
        if predicate:
            return rng.choice([TestEq(f, v), TestEq(f, v), SKIP, DROP])
        return rng.choice([TestEq(f, v), Assign(f, v), Assign(f, v), DUP, SKIP, DROP])
    sub = lambda: random_expr(rng, fields_, domain, depth - 1, predicate)  # noqa: E731
    if predicate:
        choice = rng.choice(["union", "seq", "not"])
    else:
        choice = rng.choice(["union", "seq", "seq", "star"])
    if choice == "union":
        return Union(sub(), sub())
    if choice == "seq":
        return Seq(sub(), sub())
    if choice == "not":
        return Not(sub())
    return Star(sub())

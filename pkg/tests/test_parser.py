from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wnetkat.algebra import INF
from wnetkat.ast import (
    DROP,
    DUP,
    SKIP,
    Assign,
    Comparator,
    Deq,
    Enq,
    LinearTerm,
    Not,
    QAssign,
    QEmpty,
    QTest,
    Seq,
    Star,
    TestEq,
    Union,
    assign,
    desugar_min,
    random_expr,
)
from wnetkat.core import FieldKind, Scope, quant, switch_quant, sym
from wnetkat.parser import ParseError, parse_expr, parse_flows, parse_state, parse_topology, render_expr

F, G = sym("f"), sym("g")
X, Y = quant("x"), quant("y")
C = switch_quant("C")


def test_precedence():
    e = parse_expr("f=0; g<-1 & dup*")
    assert e == Union(Seq(TestEq(F, "0"), Assign(G, "1")), Star(DUP))
    assert parse_expr("!f=0; g=1") == Seq(Not(TestEq(F, "0")), TestEq(G, "1"))
    assert parse_expr("(f=0 & g=1)*") == Star(Union(TestEq(F, "0"), TestEq(G, "1")))


def test_quantitative_inference():
    e = parse_expr("x <- x + 2; x <= 5")
    assert e == Seq(QAssign(X, LinearTerm.var(X) + LinearTerm.const(2)), QTest(LinearTerm.var(X), Comparator.LE, LinearTerm.const(5)))
    # y is quantitative because it flows into x
    e = parse_expr("x <- x + 1; y <- x")
    assert QAssign(Y, LinearTerm.var(X)) in list(e.walk())


def test_symbolic_fields_with_numeric_names_stay_symbolic():
    e = parse_expr("pt=1; pt<-2")
    assert e == Seq(TestEq(sym("pt"), "1"), Assign(sym("pt"), "2"))


def test_header_declares_kinds_and_scope():
    e = parse_expr("fields: C quant switch, n sym\nC <- C + 1; n=a")
    assert QAssign(C, LinearTerm.var(C) + LinearTerm.const(1)) in list(e.walk())
    assert C.scope is Scope.SWITCH


def test_min_max_and_coefficients():
    e = parse_expr("x <- min{x, 4}")
    assert e == desugar_min(X, X, 4)
    e = parse_expr("x <- 2*y + 1/2; x >= inf")
    assign = next(n for n in e.walk() if isinstance(n, QAssign))
    assert assign.rhs == LinearTerm.of([(Y, 2)], Fraction(1, 2))
    test = next(n for n in e.walk() if isinstance(n, QTest))
    assert test.rhs.constant is INF


def test_not_equal_and_queue_atoms():
    assert parse_expr("f != 0") == Not(TestEq(F, "0"))
    e = parse_expr("EQ q@s; DQ q@s; EMPTY q@s")
    assert e == Seq(Seq(Enq("q", "s"), Deq("q", "s")), QEmpty("q", "s"))


@pytest.mark.parametrize(
    "text,line,col",
    [
        ("f=0;\n(g<-1", 2, 6),
        ("f=0 & & g=1", 1, 7),
        ("fields: f sym\nx <- x + 1; x <- f", 2, 18),
        ("!(f <- 1)", 1, 1),
        ("x <- min{3}", 1, 6),
        ("fields: x foo\nx=1", 1, 11),
        ("f=0 $ g=1", 1, 5),
    ],
)
def test_parse_errors_report_positions(text, line, col):
    with pytest.raises(ParseError) as info:
        parse_expr(text)
    err = info.value
    assert err.span is not None
    assert (err.span.line, err.span.column) == (line, col)
    assert f"line {line}, column {col}" in str(err)


def random_quant_expr(rng: random.Random, depth: int, predicate: bool = False):
    syms = [F, G]
    quants = [X, Y]
    if depth <= 0 or rng.random() < 0.3:
        lin = LinearTerm.of([(rng.choice(quants), rng.choice([1, 2, -1]))], Fraction(rng.randint(0, 9), rng.choice([1, 2, 4])))
        pred = [
            TestEq(rng.choice(syms), rng.choice(["a", "b"])),
            QTest(LinearTerm.var(rng.choice(quants)), rng.choice(list(Comparator)), lin),
            QEmpty("q", "s"),
            SKIP,
            DROP,
        ]
        if predicate:
            return rng.choice(pred)
        return rng.choice(
            pred
            + [
                Assign(rng.choice(syms), rng.choice(["a", "b"])),
                assign(rng.choice(quants), lin),
                QAssign(C, LinearTerm.var(C) + LinearTerm.const(1)),
                Enq("q", "s"),
                Deq("q", "s"),
                DUP,
            ]
        )
    sub = lambda: random_quant_expr(rng, depth - 1, predicate)  # noqa: E731
    op = rng.choice(["union", "seq", "not"] if predicate else ["union", "seq", "star", "not"])
    if op == "union":
        return Union(sub(), sub())
    if op == "seq":
        return Seq(sub(), sub())
    if op == "star":
        return Star(sub())
    return Not(random_quant_expr(rng, depth - 1, True))


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_render_parse_round_trip(seed):
    rng = random.Random(seed)
    e = random_quant_expr(rng, 4)
    assert parse_expr(render_expr(e)) == e


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_round_trip_symbolic(seed):
    e = random_expr(random.Random(seed), [F, G], ["0", "1", "x"], depth=5)
    assert parse_expr(render_expr(e)) == e


def test_spans_are_attached_but_not_compared():
    e = parse_expr("f=0;\n  g<-1")
    right = e.right
    assert right.span.line == 2 and right.span.column == 3
    assert e == Seq(TestEq(F, "0"), Assign(G, "1"))


def test_topology_file():
    t = parse_topology(
        """
        # comment
        node a
        node b
        node c
        link a 1 b 1 cost=2 cap=5
        link b c cost=1/2 dir
        queue b q cap=3
        """
    )
    assert t.nodes == ("a", "b", "c")
    assert len(t.links) == 3
    bc = t.link("b", "c")
    assert (bc.uport, bc.vport, bc.cost, bc.cap) == ("2", "1", Fraction(1, 2), INF)
    assert t.link("b", "a").cost == 2
    assert t.queues[0].capacity == 3


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("node a\nlink a b cost=1", "unknown node"),
        ("link a 1 b 1\nlink a 1 c 1", "already used"),
        ("link a b cost=-1", "negative cost"),
        ("link a b cost=x", "malformed cost"),
        ("link a b speed=2", "unknown link attribute"),
        ("router a", "unknown record"),
        ("queue a q cap=0", "positive integer"),
        ("node a\nnode a", "declared twice"),
    ],
)
def test_topology_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse_topology(text)


def test_flows_and_state():
    t = parse_topology("link a b\nlink b c")
    fl = parse_flows("flow a c rate=2.5\nflow b c rate=1", t)
    assert [f.rate for f in fl] == [Fraction(5, 2), Fraction(1)]
    with pytest.raises(ParseError, match="unknown endpoint"):
        parse_flows("flow a z rate=1", t)
    with pytest.raises(ParseError, match="positive"):
        parse_flows("flow a c rate=0", t)
    st_ = parse_state("s1 C 0\ns1 mode fast", [C])
    assert st_[("s1", C)] == 0
    (mode,) = [f for (_, f) in st_ if f.name == "mode"]
    assert mode.kind is FieldKind.SYMBOLIC and mode.scope is Scope.SWITCH

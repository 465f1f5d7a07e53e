from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wnetkat.ast import DUP, SKIP, Star, random_expr
from wnetkat.core import SW, KindMismatch, QueueStore, UndefinedSwitchVariable, make_world, quant, switch_quant, sym
from wnetkat.evaluator import (
    EvalConfig,
    Mode,
    Outcome,
    check,
    drop_check,
    evaluate,
    evaluate_many,
    render_world,
    run_shared,
    switch_path,
)
from wnetkat.parser import parse_expr

F, G = sym("f"), sym("g")
X = quant("x")
CO = quant("co")
C = switch_quant("C")
DOMAIN = ["0", "1"]
UNIVERSE = [make_world({F: a, G: b}) for a in DOMAIN for b in DOMAIN]


def heads(res, name):
    return sorted(w.head[name] for w in res.worlds)


def test_assign_and_test():
    w = make_world({F: "0", X: 2})
    assert heads(evaluate(parse_expr("f=0; f<-1"), w), "f") == ["1"]
    assert evaluate(parse_expr("f=1"), w).worlds == frozenset()
    assert heads(evaluate(parse_expr("x <- x + 3; x > 4"), w), "x") == [5]
    assert heads(evaluate(parse_expr("x <- x - 7"), w), "x") == [0]


def test_union_collects_both_branches():
    w = make_world({F: "0"})
    assert heads(evaluate(parse_expr("f<-1 & f<-2 & f<-1"), w), "f") == ["1", "2"]


def test_dup_records_history():
    w = make_world({F: "0"})
    (out,) = evaluate(parse_expr("dup; f<-1; dup; f<-2"), w).worlds
    assert [p["f"] for p in out.history] == ["2", "1", "0"]


def test_star_fuel_and_saturation():
    e = parse_expr("(co <- co + 1)*")
    res = evaluate(e, make_world({CO: 0}), EvalConfig(fuel=10))
    assert len(res.worlds) == 11 and not res.saturated
    assert heads(res, "co") == list(range(11))
    bounded = evaluate(parse_expr("(co < 3; co <- co + 1)*"), make_world({CO: 0}), EvalConfig(fuel=10))
    assert heads(bounded, "co") == [0, 1, 2, 3] and bounded.saturated


def test_fuel_exact_fit_is_saturated():
    # three iterations reach the fixpoint; the probe step confirms it
    res = evaluate(parse_expr("(co < 3; co <- co + 1)*"), make_world({CO: 0}), EvalConfig(fuel=3))
    assert res.saturated and heads(res, "co") == [0, 1, 2, 3]


def test_max_dups_truncates():
    res = evaluate(parse_expr("(dup)*"), make_world({F: "0"}), EvalConfig(fuel=10, max_dups=2))
    assert res.truncated and res.saturated
    assert max(len(w.history) for w in res.worlds) == 3


def test_drop_check_outcomes():
    w = [make_world({CO: 0})]
    assert drop_check(parse_expr("co > 0"), w) is Outcome.IS_DROP
    assert drop_check(parse_expr("co <= 0"), w) is Outcome.NOT_DROP
    # a bare equality is symbolic unless the field is declared quant
    with pytest.raises(KindMismatch):
        drop_check(parse_expr("co = 0"), w)
    assert drop_check(parse_expr("fields: co quant\nco = 0"), w) is Outcome.NOT_DROP
    assert drop_check(parse_expr("(co <- co + 1)*; co > 100"), w, EvalConfig(fuel=10)) is Outcome.UNKNOWN
    # a dup loop saturates once histories are collapsed
    assert drop_check(parse_expr("(f<-1; dup)*; f=2"), [make_world({F: "0"})]) is Outcome.IS_DROP


def test_check_returns_shortest_witness():
    e = parse_expr("sw<-a; dup; (sw=a; sw<-b; dup & sw=b; sw<-c; dup & sw=a; sw<-c; dup)*; sw=c")
    v = check(e, [make_world({SW: "_"})])
    assert v.outcome is Outcome.NOT_DROP
    assert switch_path(v.witness) == ["a", "c"]
    assert "sw=c" in render_world(v.witness)


def test_switch_variables():
    e = parse_expr("fields: C quant switch\nC <- C + 1")
    w = make_world({SW: "s"}, {("s", C): 4})
    (out,) = evaluate(e, w).worlds
    assert out.rho[("s", "C")] == 5
    with pytest.raises(UndefinedSwitchVariable):
        evaluate(e, make_world({SW: "t"}, {("s", C): 4}))


def test_queues_bound_and_fifo():
    store = QueueStore.declare([("s", "q", 1)])
    w = make_world({SW: "s", F: "0"}, queues=store)
    (once,) = evaluate(parse_expr("EQ q@s"), w).worlds
    assert evaluate(parse_expr("EMPTY q@s"), once).worlds == frozenset()
    assert evaluate(parse_expr("EQ q@s"), once).worlds == frozenset()
    (back,) = evaluate(parse_expr("DQ q@s; EMPTY q@s"), once).worlds
    assert back.queues == store


def test_shared_state_counts_across_seeds():
    e = parse_expr("fields: C quant switch\nC <- C + 1; C >= 2")
    seeds = [make_world({SW: "s", F: v}, {("s", C): 0}) for v in "abc"]
    res = run_shared(e, seeds, EvalConfig(mode=Mode.SHARED))
    assert [len(o) for o in res.per_seed] == [0, 1, 1]
    per_world = evaluate_many(e, seeds)
    assert per_world.worlds == frozenset()


def test_shared_union_sees_left_branch_state():
    e = parse_expr("fields: C quant switch\n(C <- C + 1 & C = 1; f <- hit)")
    seeds = [make_world({SW: "s", F: "a"}, {("s", C): 0})]
    res = run_shared(e, seeds, EvalConfig(mode=Mode.SHARED))
    assert "hit" in {w.head["f"] for w in res.worlds}


def test_shared_rejects_mismatched_state():
    a = make_world({SW: "s"}, {("s", C): 0})
    b = make_world({SW: "s"}, {("s", C): 1})
    with pytest.raises(ValueError):
        run_shared(SKIP, [a, b])


@settings(max_examples=120, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_sequence_is_kleisli_composition(seed):
    rng = random.Random(seed)
    p = random_expr(rng, [F, G], DOMAIN, depth=3)
    q = random_expr(rng, [F, G], DOMAIN, depth=3)
    cfg = EvalConfig(fuel=16, max_dups=2)
    for w in UNIVERSE:
        mid = evaluate(p, w, cfg).worlds
        staged = evaluate_many(q, mid, cfg).worlds if mid else frozenset()
        assert evaluate(p >> q, w, cfg).worlds == staged


@settings(max_examples=120, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_union_is_set_union_and_star_is_reflexive(seed):
    rng = random.Random(seed)
    p = random_expr(rng, [F, G], DOMAIN, depth=3)
    q = random_expr(rng, [F, G], DOMAIN, depth=3)
    cfg = EvalConfig(fuel=16, max_dups=2)
    for w in UNIVERSE:
        assert evaluate(p & q, w, cfg).worlds == evaluate(p, w, cfg).worlds | evaluate(q, w, cfg).worlds
        assert w in evaluate(Star(p), w, cfg).worlds


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=4), st.integers(0, 12))
def test_quantities_never_go_negative(steps, start):
    text = "; ".join(f"x <- x - {k}" if i % 2 else f"x <- x + {k}" for i, k in enumerate(steps))
    (out,) = evaluate(parse_expr(text), make_world({X: start})).worlds
    expect = Fraction(start)
    for i, k in enumerate(steps):
        expect = max(Fraction(0), expect - k) if i % 2 else expect + k
    assert out.head["x"] == expect


def test_dup_commutes_with_tests():
    for w in UNIVERSE:
        a = evaluate(parse_expr("f=0; dup"), w).worlds
        b = evaluate(parse_expr("dup; f=0"), w).worlds
        assert a == b
    assert evaluate(DUP, UNIVERSE[0]).worlds != {UNIVERSE[0]}

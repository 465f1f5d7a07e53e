"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Expected values come from the reference computations in ``oracles.py``.
Run with ``pytest -s tests/test_acceptance.py`` to see the summary lines.
"""

from __future__ import annotations

import io
import random
import time
from fractions import Fraction

from oracles import (
    B4_EDGES,
    FAIR_EDGES,
    FAIR_FLOWS,
    CHAIN_EDGES,
    adjacency,
    chain_optimum,
    counter_round,
    dijkstra,
    greedy_split,
    is_max_min_fair,
    progressive_filling,
    route_of,
    widest_path,
)

from wnetkat.algebra import make_structure
from wnetkat.ast import (
    DUP,
    LAWS,
    SKIP,
    Assign,
    LinearTerm,
    QAssign,
    Star,
    TestEq,
    axiom_holds,
    compare,
    desugar_min,
    fields_of,
    random_expr,
    seq,
    union,
)
from wnetkat.cli import run
from wnetkat.core import SW, make_world, quant, sym
from wnetkat.evaluator import EvalConfig, Mode, Outcome, drop_check, evaluate_many, run_shared, switch_path
from wnetkat.netmodel import (
    CAPACITY,
    COST,
    LATENCY,
    RATE,
    CapMode,
    ChainFunction,
    cap_reach_query,
    chain_query,
    cost_reach_query,
    fairness_check,
    load_flows,
    load_topology,
    qos_policy,
    qos_queue_policy,
    qos_seeds,
    read_asset,
    run_query,
    simulate_qos,
)
from wnetkat.parser import parse_expr, parse_state
from wnetkat.wfa import classify_weight_regular, emptiness, expr_to_wfa, optimal_weight


def report(n: int, title: str, ok: bool, detail: str = "") -> None:
    print(f"[criterion {n}] {'PASS' if ok else 'FAIL'} {title}{' (' + detail + ')' if detail else ''}")


def test_criterion_1_cost_reachability():
    t0 = time.perf_counter()
    dist, path = dijkstra(adjacency(B4_EDGES), "dc1", "dc5")
    t = load_topology("b4.top")
    ok_v = run_query(cost_reach_query(t, None, "dc1", "dc5", dist), t, bound_var=LATENCY)
    tight = run_query(cost_reach_query(t, None, "dc1", "dc5", dist - 1), t, bound_var=LATENCY)
    elapsed = time.perf_counter() - t0
    ok = (
        dist == 7
        and ok_v.outcome is Outcome.NOT_DROP
        and tight.outcome is Outcome.IS_DROP
        and switch_path(ok_v.witness) == path == ["dc1", "dc2", "dc5"]
        and ok_v.bound_value == Fraction(7)
        and isinstance(ok_v.bound_value, Fraction)
        and elapsed < 1
    )
    report(1, "cost reachability dc1->dc5", ok, f"bound {dist}, path {path}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_unsplittable_capacity():
    t0 = time.perf_counter()
    width = widest_path(adjacency(B4_EDGES), "dc1", "dc5")
    t = load_topology("b4.top")
    verdicts = {}
    for mode in (CapMode.UNSPLIT_MIN, CapMode.UNSPLIT_GUARD):
        for rate in (width, width + 1):
            e, m = cap_reach_query(t, None, "dc1", "dc5", rate, mode)
            verdicts[mode, rate] = run_query(e, t, mode=m, bound_var=RATE)
    elapsed = time.perf_counter() - t0
    via = switch_path(verdicts[CapMode.UNSPLIT_MIN, width].witness)
    ok = (
        width == 6
        and all(verdicts[m, width].outcome is Outcome.NOT_DROP for m in (CapMode.UNSPLIT_MIN, CapMode.UNSPLIT_GUARD))
        and all(verdicts[m, width + 1].outcome is Outcome.IS_DROP for m in (CapMode.UNSPLIT_MIN, CapMode.UNSPLIT_GUARD))
        and "dc4" in via
        and elapsed < 1
    )
    report(2, "unsplittable capacity dc1->dc5", ok, f"width {width} via {via}, {elapsed:.2f}s")
    assert ok


def test_criterion_3_fairness():
    t0 = time.perf_counter()
    t = load_topology("fair.top")
    flows = load_flows("fair.flows", t)
    routes = [route_of(FAIR_EDGES, s, d) for s, d in FAIR_FLOWS]
    fair_rates = progressive_filling(FAIR_EDGES, routes)

    given = fairness_check(t, flows)
    seq_given = [(f.src, f.dst, f.rate, v.outcome) for f, v in given]
    expect_fair = is_max_min_fair(FAIR_EDGES, routes, [f.rate for f in flows])
    by_flow = {(f.src, f.dst, f.rate): v.outcome for f, v in given}
    oracle_match = all(
        by_flow[(s, d, f.rate)] is (Outcome.NOT_DROP if fair else Outcome.IS_DROP)
        for (s, d), f, fair in zip(FAIR_FLOWS, flows, expect_fair)
    )
    refilled = fairness_check(t, flows.with_rates(fair_rates))
    elapsed = time.perf_counter() - t0
    ok = (
        [o for *_, o in seq_given[:2]] == [Outcome.NOT_DROP, Outcome.IS_DROP]
        and seq_given[0][:2] == ("s2", "d2")
        and seq_given[1][:2] == ("s1", "d1")
        and oracle_match
        and fair_rates == [Fraction(5, 2), Fraction(5, 2), Fraction(1)]
        and all(v.outcome is Outcome.NOT_DROP for _, v in refilled)
        and elapsed < 1
    )
    report(3, "max-min fairness", ok, f"(2,3,1) -> {[o.value for *_, o in seq_given]}, fair rates {fair_rates}")
    assert ok


def test_criterion_4_service_chain():
    t0 = time.perf_counter()
    groups = [{"F1"}, {"F2_1", "F2_2"}]
    best_cost, cost_paths, best_cap, cap_paths = chain_optimum(CHAIN_EDGES, "s", "t", groups)
    t = load_topology("chain.top")
    chain = [ChainFunction("F1"), ChainFunction("F2")]
    both = run_query(chain_query(t, chain, "s", "t", best_cost, best_cap), t, bound_var=COST)
    cost_only = run_query(chain_query(t, chain, "s", "t", best_cost, None), t, bound_var=COST)
    rate_only = run_query(chain_query(t, chain, "s", "t", None, best_cap), t, bound_var=CAPACITY)
    tight = run_query(chain_query(t, chain, "s", "t", best_cost - 1, None), t, bound_var=COST)
    wider = run_query(chain_query(t, chain, "s", "t", None, best_cap + 1), t, bound_var=CAPACITY)
    elapsed = time.perf_counter() - t0
    path = ["s", "F1", "F2_2", "t"]
    ok = (
        (best_cost, best_cap) == (4, 4)
        and cost_paths == [path]
        and cap_paths == [path]
        and both.outcome is Outcome.NOT_DROP
        and switch_path(both.witness) == path
        and cost_only.bound_value == 4
        and rate_only.bound_value == 4
        and tight.outcome is Outcome.IS_DROP
        and wider.outcome is Outcome.IS_DROP
        and len(CHAIN_EDGES) == len(t.links) == 8
        and elapsed < 1
    )
    report(4, "service chain s->F1->F2->t", ok, f"cost {best_cost}, bottleneck {best_cap}, path {path}")
    assert ok


def test_criterion_5_qos():
    t0 = time.perf_counter()
    shares = [("high", 8), ("low", 2)]
    topo = load_topology("qos.top")
    plain = qos_policy("r", ["1", "2"], "3", shares)
    queued = qos_queue_policy("r", shares, topo, "3", ["1", "2"])
    mixed = ["high"] * 8 + ["low"] * 2
    flood = ["high"] * 10

    def run_policy(pol, arrivals, t=None):
        rep = simulate_qos(pol, qos_seeds("r", arrivals, shares, topology=t), "3")
        assert rep.result.saturated
        return {"high": rep.count("high"), "low": rep.count("low")}

    got = {
        "mixed": run_policy(plain, mixed),
        "flood": run_policy(plain, flood),
        "flood-queued": run_policy(queued, flood, topo),
        "mixed-queued": run_policy(queued, mixed, topo),
    }
    want = {
        "mixed": counter_round(mixed, shares),
        "flood": counter_round(flood, shares),
        "flood-queued": counter_round(flood, shares, borrow=True),
        "mixed-queued": counter_round(mixed, shares, borrow=True),
    }
    elapsed = time.perf_counter() - t0
    ok = (
        got == want
        and got["mixed"] == {"high": 8, "low": 2}
        and got["flood"] == {"high": 8, "low": 0}
        and got["flood-queued"] == {"high": 10, "low": 0}
        and elapsed < 1
    )
    report(5, "QoS bandwidth shares", ok, f"{got}")
    assert ok


def test_criterion_6_axioms():
    fields = [sym("f"), sym("g")]
    domain = ["0", "1"]
    universe = [make_world({fields[0]: a, fields[1]: b}) for a in domain for b in domain]
    rng = random.Random(2024)
    violations: dict[str, int] = {}
    counts: dict[str, int] = {}
    for law in LAWS:
        n = 0
        while n < 200:
            b = {k: random_expr(rng, fields, domain, depth=4) for k in "pqr"}
            b.update({k: random_expr(rng, fields, domain, depth=4, predicate=True) for k in "abc"})
            b["f1"], b["f2"] = rng.choice(fields), rng.choice(fields)
            b["w1"], b["w2"] = rng.choice(domain), rng.choice(domain)
            b["domain"] = domain
            worlds = [rng.choice(universe) for _ in range(20)]
            try:
                holds = axiom_holds(law, b, worlds)
            except ValueError:
                continue
            n += 1
            if not holds:
                violations[law] = violations.get(law, 0) + 1
        counts[law] = n
    ok = not violations and all(c >= 200 for c in counts.values())
    report(6, "equational axioms", ok, f"{len(LAWS)} laws x 200 instances, violations {violations or 0}")
    assert ok


X = quant("x")


def random_weight_regular(rng: random.Random, kind: str):
    """Entry assignment, a star of weighted hops over <= 3 switches, a final test."""
    nodes = ["n0", "n1", "n2"][: rng.randint(1, 3)]
    low = 1 if kind == "max-min" else 0
    k = rng.randint(low, 3)
    c = rng.randint(0, 12)
    final = compare(X, "<=" if kind == "min-plus" else ">=", c)
    hops = []
    for _ in range(rng.randint(1, 5)):
        a, b = rng.choice(nodes), rng.choice(nodes)
        if kind == "max-plus" and nodes.index(a) >= nodes.index(b):
            continue
        w = rng.randint(low, 6)
        if kind == "max-min":
            upd = desugar_min(X, X, w)
        else:
            upd = QAssign(X, LinearTerm.var(X) + LinearTerm.const(w)) if w else SKIP
        parts = [TestEq(SW, a), upd, Assign(SW, b)]
        if kind == "min-plus":
            parts.append(final)
        parts.append(DUP)
        hops.append(seq(*parts))
    if not hops:
        hops = [seq(TestEq(SW, nodes[0]), DUP)]
    body = Star(union(*hops))
    if rng.random() < 0.5:
        return seq(QAssign(X, LinearTerm.const(k)), TestEq(SW, rng.choice(nodes)), body, TestEq(SW, rng.choice(nodes)), final)
    return seq(QAssign(X, LinearTerm.const(k)), body, final)


def test_criterion_7_evaluator_wfa_agreement():
    t0 = time.perf_counter()
    rng = random.Random(77)
    disagreements = []
    checked = 0
    cfg = EvalConfig(fuel=200, collapse_history=True)
    for i in range(150):
        kind = ("min-plus", "max-min", "max-plus")[i % 3]
        s = make_structure(kind)
        e = random_weight_regular(rng, kind)
        a = expr_to_wfa(classify_weight_regular(e, s))
        inputs = [make_world({**dict(zip(a.space.fields, atom)), X: Fraction(0)}) for atom in a.space.atoms()]
        assert a.space.size <= 4
        res = evaluate_many(e, inputs, cfg)
        verdict = drop_check(e, inputs, cfg)
        values = [w.head["x"] for w in res.worlds]
        best = (min(values) if kind == "min-plus" else max(values)) if values else s.zero
        checked += 1
        if not res.saturated or emptiness(a) != (verdict is Outcome.IS_DROP) or optimal_weight(a) != best:
            disagreements.append(str(e))
    elapsed = time.perf_counter() - t0
    ok = checked >= 100 and not disagreements and elapsed < 10
    report(7, "evaluator and automaton agree", ok, f"{checked} expressions, {len(disagreements)} disagreements, {elapsed:.2f}s")
    assert ok


def test_criterion_8_splittable_capacity():
    t0 = time.perf_counter()
    t = load_topology("b4.top")
    policy = parse_expr(read_asset("b4_split.wnk"))
    rho = parse_state(read_asset("b4_split.state"), fields_of(policy))
    c = quant("c")

    # Scripted merge at dc5: the copy from dc2 arrives first, then the one from dc4.
    first = make_world({SW: "dc5", sym("pt"): "3", c: Fraction(3)}, rho)
    second = make_world({SW: "dc5", sym("pt"): "2", c: Fraction(7)}, rho)
    trace = run_shared(policy, [first, second], EvalConfig(mode=Mode.SHARED))
    first_out, second_out = trace.per_seed
    merged = [w.head["c"] for w in second_out]
    merge_ok = first_out == () and merged == [Fraction(10)] and trace.saturated

    verdicts = {}
    for rate in range(1, 9):
        e, m = cap_reach_query(t, policy, "dc1", "dc5", Fraction(rate), CapMode.SPLIT)
        verdicts[rate] = run_query(e, t, mode=m, rho=rho, bound_var=RATE).outcome
    expected = {r: Outcome.NOT_DROP if greedy_split(r) == r else Outcome.IS_DROP for r in range(1, 9)}
    elapsed = time.perf_counter() - t0
    ok = merge_ok and verdicts == expected and elapsed < 1
    report(8, "splittable capacity with merge counters", ok, f"merge -> {merged}, rates 1..8 {[v.value for v in verdicts.values()]}")
    assert ok


def test_criterion_9_equivalence_refused():
    out, err = io.StringIO(), io.StringIO()
    code = run(["equiv", "--left", "a.wnk", "--right", "b.wnk"], out=out, err=err)
    msg = err.getvalue()
    ok = code == 3 and "emptiness" in msg and "check" in msg and out.getvalue() == ""
    report(9, "equivalence request refused", ok, f"exit {code}")
    assert ok

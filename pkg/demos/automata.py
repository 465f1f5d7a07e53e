"""Compile a cost query to a weighted automaton and compare it with evaluation.

Run: python3 demos/automata.py
"""

from __future__ import annotations

from fractions import Fraction

from wnetkat.algebra import format_weight, make_structure
from wnetkat.netmodel import LATENCY, cost_reach_query, load_topology, run_query
from wnetkat.parser import parse_expr
from wnetkat.wfa import compile_expr, emptiness, optimal_weight


def main() -> None:
    s = make_structure("min-plus")
    small = parse_expr("x <- 0; (sw = A; x <- x + 2; sw <- B; dup)*; sw = B; x <= 5")
    print("A two-switch program as an automaton:")
    print(compile_expr(small, s).to_text())

    t = load_topology("b4.top")
    for bound in (6, 7):
        e = cost_reach_query(t, None, "dc1", "dc5", Fraction(bound))
        a = compile_expr(e, s)
        v = run_query(e, t, bound_var=LATENCY)
        print(
            f"budget {bound}: automaton with {len(a.states)} states is "
            f"{'empty' if emptiness(a) else 'non-empty'} (optimum {format_weight(optimal_weight(a))}); "
            f"evaluator says {v.outcome.value}"
        )


if __name__ == "__main__":
    main()

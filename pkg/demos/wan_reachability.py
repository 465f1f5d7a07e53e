"""Walk through cost and capacity questions on the six-site WAN topology.

Run: python3 demos/wan_reachability.py
"""

from __future__ import annotations

from fractions import Fraction

from wnetkat.ast import fields_of
from wnetkat.evaluator import switch_path
from wnetkat.netmodel import (
    LATENCY,
    RATE,
    CapMode,
    cap_reach_query,
    cost_reach_query,
    load_topology,
    read_asset,
    run_query,
)
from wnetkat.parser import parse_expr, parse_state


def main() -> None:
    t = load_topology("b4.top")
    print(f"topology: {len(t.nodes)} sites, {len(t.links)} directed links")

    print("\nCan a packet get from dc1 to dc5 within a latency budget?")
    for bound in (5, 6, 7, 8):
        v = run_query(cost_reach_query(t, None, "dc1", "dc5", Fraction(bound)), t, bound_var=LATENCY)
        extra = f" via {' -> '.join(switch_path(v.witness))} (latency {v.bound_value})" if v.witness else ""
        print(f"  budget {bound}: {v.outcome.value}{extra}")

    print("\nCan a single path carry a flow of a given rate?")
    for rate in (5, 6, 7):
        row = []
        for mode in (CapMode.UNSPLIT_MIN, CapMode.UNSPLIT_GUARD):
            e, m = cap_reach_query(t, None, "dc1", "dc5", Fraction(rate), mode)
            row.append(f"{mode.value}={run_query(e, t, mode=m, bound_var=RATE).outcome.value}")
        print(f"  rate {rate}: " + ", ".join(row))

    print("\nWith split and merge rules, copies travel over several paths:")
    policy = parse_expr(read_asset("b4_split.wnk"))
    rho = parse_state(read_asset("b4_split.state"), fields_of(policy))
    for rate in (6, 10, 11):
        e, m = cap_reach_query(t, policy, "dc1", "dc5", Fraction(rate), CapMode.SPLIT)
        print(f"  rate {rate}: {run_query(e, t, mode=m, rho=rho, bound_var=RATE).outcome.value}")


if __name__ == "__main__":
    main()

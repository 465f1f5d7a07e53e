"""Service chains, max-min fairness and counter-based QoS in one tour.

Run: python3 demos/chain_fairness_qos.py
"""

from __future__ import annotations

from fractions import Fraction

from wnetkat.algebra import format_weight
from wnetkat.evaluator import switch_path
from wnetkat.netmodel import (
    CAPACITY,
    COST,
    ChainFunction,
    Effect,
    chain_query,
    fairness_check,
    load_flows,
    load_topology,
    qos_policy,
    qos_queue_policy,
    qos_seeds,
    run_query,
    simulate_qos,
)


def chains() -> None:
    t = load_topology("chain.top")
    fns = [ChainFunction("F1"), ChainFunction("F2")]
    print("Service chain s -> F1 -> F2 -> t")
    v = run_query(chain_query(t, fns, "s", "t", Fraction(4), Fraction(4)), t, bound_var=COST)
    print(f"  cost <= 4 and rate >= 4: {v.outcome.value} via {' -> '.join(switch_path(v.witness))}")
    v = run_query(chain_query(t, fns, "s", "t", Fraction(3), None), t, bound_var=COST)
    print(f"  cost <= 3: {v.outcome.value}")
    boosted = [ChainFunction("F1"), ChainFunction("F2", effect=Effect.mul(2))]
    v = run_query(chain_query(t, boosted, "s", "t", None, Fraction(4)), t, bound_var=CAPACITY)
    print(f"  F2 doubles the rate; best bottleneck is {format_weight(v.bound_value)}")


def fairness() -> None:
    t = load_topology("fair.top")
    flows = load_flows("fair.flows", t)
    for rates in ([2, 3, 1], [Fraction(5, 2), Fraction(5, 2), 1]):
        fs = flows.with_rates([Fraction(r) for r in rates])
        verdicts = ", ".join(f"{f.src}->{f.dst}@{format_weight(f.rate)}: {v.outcome.value}" for f, v in fairness_check(t, fs))
        print(f"Fairness of {[format_weight(Fraction(r)) for r in rates]}: {verdicts}")


def qos() -> None:
    shares = [("high", 8), ("low", 2)]
    t = load_topology("qos.top")
    flood = ["high"] * 10
    plain = simulate_qos(qos_policy("r", ["1", "2"], "3", shares), qos_seeds("r", flood, shares), "3")
    queued = simulate_qos(qos_queue_policy("r", shares, t, "3", ["1", "2"]), qos_seeds("r", flood, shares, topology=t), "3")
    print(f"QoS with 10 high packets: counters forward {plain.count('high')}, borrowing forwards {queued.count('high')}")


if __name__ == "__main__":
    chains()
    print()
    fairness()
    print()
    qos()

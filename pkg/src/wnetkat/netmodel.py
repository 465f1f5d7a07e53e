"""Weighted topologies and builders for verification queries.

Every builder returns a plain expression; the verdict helpers then run the
evaluator on a single default input world.  A query overwrites every field it
reads before reading it, so one input stands for all inputs.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .algebra import INF, Infinity, Weight, as_weight
from .ast import (
    DROP,
    DUP,
    SKIP,
    Assign,
    Comparator,
    Deq,
    Enq,
    Expr,
    LinearTerm,
    Not,
    QEmpty,
    QTest,
    Star,
    TestEq,
    assign,
    compare,
    desugar_min,
    fields_of,
    seq,
    union,
    writes_switch_state,
)
from .core import (
    OTHER,
    PT,
    SW,
    FieldId,
    QueueStore,
    WNetKATError,
    World,
    make_world,
    quant,
    switch_quant,
    sym,
)
from .evaluator import EvalConfig, EvalResult, Mode, Verdict, check, run_shared


class TopologyError(WNetKATError):
    pass


class QueryError(WNetKATError):
    pass


SRC = sym("src")
DST = sym("dst")
LATENCY = quant("l")
RATE = quant("c")
COST = quant("co")
CAPACITY = quant("ca")
BANDWIDTH = quant("a")
MERGE_COUNT = switch_quant("X")
MERGE_SUM = switch_quant("C")
PACKET_ID = sym("id")
PRIORITY = sym("x")


@dataclass(frozen=True)
class Link:
    u: str
    uport: str
    v: str
    vport: str
    cost: Weight = Fraction(0)
    cap: Weight = INF

    def __str__(self) -> str:
        return f"{self.u}:{self.uport} -> {self.v}:{self.vport}"


@dataclass(frozen=True)
class QueueDecl:
    switch: str
    name: str
    capacity: int = 64


@dataclass(frozen=True)
class Topology:
    nodes: tuple[str, ...] = ()
    links: tuple[Link, ...] = ()
    queues: tuple[QueueDecl, ...] = ()

    def __post_init__(self):
        known = set(self.nodes)
        sources, targets = set(), set()
        for ln in self.links:
            for n in (ln.u, ln.v):
                if n not in known:
                    raise TopologyError(f"link {ln} references unknown node {n}")
            for w in (ln.cost, ln.cap):
                if w < 0:
                    raise TopologyError(f"link {ln} has a negative weight")
            if (ln.u, ln.uport) in sources:
                raise TopologyError(f"two links leave {ln.u} port {ln.uport}")
            if (ln.v, ln.vport) in targets:
                raise TopologyError(f"two links enter {ln.v} port {ln.vport}")
            sources.add((ln.u, ln.uport))
            targets.add((ln.v, ln.vport))
        for q in self.queues:
            if q.switch not in known:
                raise TopologyError(f"queue {q.name} declared at unknown switch {q.switch}")

    def out_links(self, node: str) -> list[Link]:
        return sorted((ln for ln in self.links if ln.u == node), key=lambda ln: _port_key(ln.uport))

    def link(self, u: str, v: str) -> Link:
        for ln in self.out_links(u):
            if ln.v == v:
                return ln
        raise TopologyError(f"no link {u} -> {v}")

    def max_capacity(self) -> Weight:
        finite = [ln.cap for ln in self.links if not isinstance(ln.cap, Infinity)]
        return max(finite) if finite else INF

    def queue_store(self) -> QueueStore:
        return QueueStore.declare((q.switch, q.name, q.capacity) for q in self.queues)

    def default_fuel(self) -> int:
        return max(1, len(self.links) * len(self.nodes))


def _port_key(p: str):
    return (0, int(p), "") if p.isdigit() else (1, 0, p)


@dataclass(frozen=True)
class Flow:
    src: str
    dst: str
    rate: Weight


@dataclass(frozen=True)
class FlowSet:
    flows: tuple[Flow, ...] = ()

    def __post_init__(self):
        for f in self.flows:
            if isinstance(f.rate, Infinity) or f.rate <= 0:
                raise ValueError(f"flow {f.src}->{f.dst} needs a finite positive rate")

    def __len__(self) -> int:
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows)

    def __getitem__(self, i) -> Flow:
        return self.flows[i]

    def with_rates(self, rates: Sequence) -> "FlowSet":
        return FlowSet(tuple(Flow(f.src, f.dst, as_weight(r)) for f, r in zip(self.flows, rates)))


# ---------------------------------------------------------------------------
# link roles


class RoleKind(enum.Enum):
    COST = "cost"
    CAP_MIN = "cap-min"
    CAP_GUARD = "cap-guard"
    PLAIN = "plain"
    CHAIN = "chain"


@dataclass(frozen=True)
class Role:
    """How a link's weights show up in its expression."""

    kind: RoleKind
    var: Optional[FieldId] = None
    rate_var: Optional[FieldId] = None

    @classmethod
    def cost(cls, var: FieldId = LATENCY) -> "Role":
        return cls(RoleKind.COST, var)

    @classmethod
    def cap_min(cls, var: FieldId = RATE) -> "Role":
        return cls(RoleKind.CAP_MIN, var)

    @classmethod
    def cap_guard(cls, var: FieldId = RATE) -> "Role":
        return cls(RoleKind.CAP_GUARD, var)

    @classmethod
    def plain(cls) -> "Role":
        return cls(RoleKind.PLAIN)

    @classmethod
    def chain(cls, cost_var: Optional[FieldId] = COST, rate_var: Optional[FieldId] = CAPACITY) -> "Role":
        return cls(RoleKind.CHAIN, cost_var, rate_var)

    def __post_init__(self):
        for v in (self.var, self.rate_var):
            if v is not None and not v.quantitative:
                raise QueryError(f"role variable {v.name} must be quantitative")
        if self.kind not in (RoleKind.PLAIN, RoleKind.CHAIN) and self.var is None:
            raise QueryError(f"role {self.kind.value} needs a variable")


def _add_cost(var: FieldId, w: Weight) -> Expr:
    return assign(var, LinearTerm.var(var) + LinearTerm.const(w))


def _cap_min(var: FieldId, w: Weight) -> Expr:
    if isinstance(w, Infinity):
        return SKIP
    return desugar_min(var, var, w)


def link_expr(ln: Link, role: Role) -> Expr:
    """``sw=u; pt=up; sw<-v; pt<-vp`` followed by the role's weight atoms."""
    atoms: list[Expr] = [TestEq(SW, ln.u), TestEq(PT, ln.uport), Assign(SW, ln.v), Assign(PT, ln.vport)]
    k = role.kind
    if k is RoleKind.COST:
        atoms.append(_add_cost(role.var, ln.cost))
    elif k is RoleKind.CAP_MIN:
        atoms.append(_cap_min(role.var, ln.cap))
    elif k is RoleKind.CAP_GUARD:
        if not isinstance(ln.cap, Infinity):
            atoms.append(compare(role.var, Comparator.LE, ln.cap))
    elif k is RoleKind.CHAIN:
        if role.var is not None:
            atoms.append(_add_cost(role.var, ln.cost))
        if role.rate_var is not None:
            atoms.append(_cap_min(role.rate_var, ln.cap))
    return seq(*(a for a in atoms if a != SKIP))


def topology_to_expr(t: Topology, role: Role) -> Expr:
    """Union of all directed link expressions; the empty topology is ``drop``."""
    return union(*(link_expr(ln, role) for ln in t.links))


def flood_policy(t: Topology) -> Expr:
    """At every switch, forward a copy out of each port that has a link."""
    branches = []
    for n in t.nodes:
        outs = t.out_links(n)
        if outs:
            branches.append(seq(TestEq(SW, n), union(*(Assign(PT, ln.uport) for ln in outs))))
    return union(*branches)


def _require_nodes(t: Topology, *names: str) -> None:
    for n in names:
        if n not in t.nodes:
            raise QueryError(f"unknown node {n!r}")


# ---------------------------------------------------------------------------
# reachability queries


def cost_reach_query(
    t: Topology,
    policy: Optional[Expr],
    a: str,
    b: str,
    bound: Optional[Weight],
    var: FieldId = LATENCY,
) -> Expr:
    """Can ``a`` reach ``b`` with accumulated cost at most ``bound``?

    The bound is also tested after every hop: costs only grow, so this prunes
    without changing the answer and keeps cyclic topologies finite.
    ``bound=None`` drops the tests (useful for computing the optimum).
    """
    _require_nodes(t, a, b)
    policy = flood_policy(t) if policy is None else policy
    topo = topology_to_expr(t, Role.cost(var))
    guard = [compare(var, Comparator.LE, bound)] if bound is not None else []
    hop = seq(policy, topo, *guard, DUP)
    return seq(
        Assign(SRC, a),
        Assign(DST, b),
        assign(var, 0),
        Assign(SW, a),
        DUP,
        Star(hop),
        TestEq(SW, b),
        *guard,
    )


class CapMode(enum.Enum):
    UNSPLIT_MIN = "unsplit-min"
    UNSPLIT_GUARD = "unsplit-guard"
    SPLIT = "split"


def cap_reach_query(
    t: Topology,
    policy: Optional[Expr],
    a: str,
    b: str,
    rate: Optional[Weight],
    mode: CapMode = CapMode.UNSPLIT_MIN,
    var: FieldId = RATE,
) -> tuple[Expr, Mode]:
    """Can a flow of ``rate`` travel from ``a`` to ``b``?

    Returns the query and the evaluation mode it needs.  ``UNSPLIT_MIN``
    tracks the path bottleneck, ``UNSPLIT_GUARD`` only compares the rate with
    every link's capacity, and ``SPLIT`` relies on split/merge rules in the
    policy and is evaluated with shared switch state.
    """
    _require_nodes(t, a, b)
    policy = flood_policy(t) if policy is None else policy
    start = [Assign(SRC, a), Assign(DST, b), assign(var, INF if rate is None else rate), Assign(SW, a), DUP]
    at_least = [compare(var, Comparator.GE, rate)] if rate is not None else []
    if mode is CapMode.UNSPLIT_MIN:
        hop = seq(policy, topology_to_expr(t, Role.cap_min(var)), *at_least, DUP)
        return seq(*start, Star(hop), TestEq(SW, b), *at_least), Mode.PER_WORLD
    if mode is CapMode.UNSPLIT_GUARD:
        hop = seq(policy, topology_to_expr(t, Role.cap_guard(var)), DUP)
        return seq(*start, Star(hop), TestEq(SW, b)), Mode.PER_WORLD
    if rate is None:
        raise QueryError("a splittable query needs a rate")
    if not writes_switch_state(policy) or MERGE_COUNT not in fields_of(policy):
        raise QueryError("a splittable query needs a policy with merge rules on the switch counter X")
    # copies stop travelling once they reach b; b's merge rule then runs once per copy
    hop = seq(Not(TestEq(SW, b)), policy, topology_to_expr(t, Role.cap_guard(var)), DUP)
    final = seq(TestEq(SW, b), policy, compare(MERGE_COUNT, Comparator.EQ, 0), *at_least)
    return seq(*start, Star(hop), final), Mode.SHARED


# ---------------------------------------------------------------------------
# service chains


class EffectKind(enum.Enum):
    CONSERVE = "conserve"
    ADD = "add"
    MUL = "mul"


@dataclass(frozen=True)
class Effect:
    kind: EffectKind = EffectKind.CONSERVE
    amount: Weight = Fraction(0)

    @classmethod
    def conserve(cls) -> "Effect":
        return cls()

    @classmethod
    def add(cls, gamma) -> "Effect":
        return cls(EffectKind.ADD, as_weight(gamma))

    @classmethod
    def mul(cls, k) -> "Effect":
        return cls(EffectKind.MUL, as_weight(k))

    def apply(self, var: FieldId) -> Expr:
        if self.kind is EffectKind.ADD:
            return assign(var, LinearTerm.var(var) + LinearTerm.const(self.amount))
        if self.kind is EffectKind.MUL:
            return assign(var, LinearTerm.of([(var, self.amount)]))
        return SKIP


@dataclass(frozen=True)
class ChainFunction:
    name: str
    instances: tuple[str, ...] = ()
    effect: Effect = field(default_factory=Effect)

    def resolve(self, t: Topology) -> tuple[str, ...]:
        """Explicit instances, or every node named ``name`` or ``name_<k>``."""
        if self.instances:
            missing = [n for n in self.instances if n not in t.nodes]
            if missing:
                raise QueryError(f"function {self.name} instance {missing[0]} is not in the topology")
            return self.instances
        found = tuple(n for n in t.nodes if n == self.name or n.startswith(self.name + "_"))
        if not found:
            raise QueryError(f"function {self.name} has no instance in the topology")
        return found


def chain_query(
    t: Topology,
    chain: Sequence[ChainFunction],
    a: str,
    b: str,
    max_cost: Optional[Weight] = None,
    min_rate: Optional[Weight] = None,
    policy: Optional[Expr] = None,
    track_cost: Optional[bool] = None,
    track_rate: Optional[bool] = None,
) -> Expr:
    """Reach ``b`` from ``a`` through the functions of ``chain`` in order.

    Cost is tracked in ``co`` and the bottleneck rate in ``ca``; each is only
    tracked when its bound is given unless forced with ``track_*``.
    """
    if not chain:
        raise QueryError("a service chain needs at least one function")
    _require_nodes(t, a, b)
    policy = flood_policy(t) if policy is None else policy
    use_cost = max_cost is not None if track_cost is None else track_cost
    use_rate = min_rate is not None if track_rate is None else track_rate
    role = Role.chain(COST if use_cost else None, CAPACITY if use_rate else None)
    guard = [compare(COST, Comparator.LE, max_cost)] if max_cost is not None else []
    hop = Star(seq(policy, topology_to_expr(t, role), *guard, DUP))
    parts: list[Expr] = [Assign(SRC, a), Assign(DST, b)]
    if use_cost:
        parts.append(assign(COST, 0))
    if use_rate:
        parts.append(assign(CAPACITY, INF))
    parts += [Assign(SW, a), DUP, hop]
    for fn in chain:
        parts.append(union(*(TestEq(SW, n) for n in fn.resolve(t))))
        if use_rate:
            parts.append(fn.effect.apply(CAPACITY))
        parts.append(hop)
    parts.append(TestEq(SW, b))
    parts += guard
    if min_rate is not None:
        parts.append(compare(CAPACITY, Comparator.GE, min_rate))
    return seq(*(p for p in parts if p != SKIP))


# ---------------------------------------------------------------------------
# running queries


def default_world(e: Expr, rho=None, queues: QueueStore | None = None, values=None) -> World:
    """A single input world declaring every packet field of ``e``.

    Symbolic fields start at the fresh symbol ``_`` and quantities at 0
    unless ``values`` says otherwise.
    """
    pk = {}
    for f in sorted(fields_of(e) | {SW, PT}, key=lambda f: f.name):
        if f.is_switch:
            continue
        pk[f] = Fraction(0) if f.quantitative else OTHER
    for f, v in (values or {}).items():
        pk[f] = v
    return make_world(pk, rho, queues)


def run_query(
    e: Expr,
    t: Optional[Topology] = None,
    mode: Mode = Mode.PER_WORLD,
    fuel: Optional[int] = None,
    rho=None,
    bound_var: Optional[FieldId] = None,
    witness: bool = True,
) -> Verdict:
    """Drop-check a query from its default input world."""
    if fuel is None:
        fuel = t.default_fuel() if t is not None else 64
    queues = t.queue_store() if t is not None else None
    w = default_world(e, rho, queues)
    v = check(e, [w], EvalConfig(fuel=fuel, mode=mode), witness=witness)
    if v.witness is not None and bound_var is not None:
        return Verdict(v.outcome, v.witness, v.saturated, v.witness.head.get(bound_var.name))
    return v


# ---------------------------------------------------------------------------
# max-min fairness


def shortest_route(t: Topology, src: str, dst: str) -> list[Link]:
    """Fewest-hop route, ties broken by port order."""
    _require_nodes(t, src, dst)
    prev: dict[str, Optional[Link]] = {src: None}
    todo = deque([src])
    while todo:
        n = todo.popleft()
        if n == dst:
            break
        for ln in t.out_links(n):
            if ln.v not in prev:
                prev[ln.v] = ln
                todo.append(ln.v)
    if dst not in prev:
        raise QueryError(f"no route from {src} to {dst}")
    path: list[Link] = []
    n = dst
    while prev[n] is not None:
        ln = prev[n]
        path.append(ln)
        n = ln.u
    return path[::-1]


def rate_var(i: int) -> FieldId:
    return quant(f"x{i + 1}")


def fairness_query(t: Topology, flows: FlowSet, i: int, routes: Sequence[Sequence[Link]] | None = None) -> Expr:
    """Query that is not ``drop`` iff flow ``i`` cannot grow.

    Flows with a rate at most flow ``i``'s keep their rates, larger ones are
    zeroed.  Along flow ``i``'s route the bandwidth variable ``a`` is lowered
    to what each link leaves after the other flows; the flow is at its fair
    share when its rate equals the final ``a``.
    """
    if routes is None:
        routes = [shortest_route(t, f.src, f.dst) for f in flows]
    me = flows[i]
    xs = [rate_var(j) for j in range(len(flows))]
    init = [Assign(SRC, me.src), Assign(DST, me.dst)]
    for j, f in enumerate(flows):
        init.append(assign(xs[j], f.rate if f.rate <= me.rate else 0))
    init.append(assign(BANDWIDTH, t.max_capacity()))
    branches = []
    for ln in routes[i]:
        others = [xs[j] for j in range(len(flows)) if j != i and ln in routes[j]]
        room = LinearTerm.of([(x, -1) for x in others], 0) + LinearTerm.const(ln.cap)
        branches.append(seq(TestEq(SW, ln.u), Assign(PT, ln.uport), desugar_min(BANDWIDTH, BANDWIDTH, room)))
    policy = union(*branches)
    hop = seq(policy, topology_to_expr(t, Role.plain()), DUP)
    return seq(
        *init,
        Assign(SW, me.src),
        DUP,
        Star(hop),
        TestEq(SW, me.dst),
        compare(xs[i], Comparator.EQ, BANDWIDTH),
    )


def fairness_check(t: Topology, flows: FlowSet, fuel: Optional[int] = None) -> list[tuple[Flow, Verdict]]:
    """Verdict per flow in ascending-rate order; all ``NotDrop`` means max-min fair."""
    if not len(flows):
        raise QueryError("fairness needs at least one flow")
    for f in flows:
        _require_nodes(t, f.src, f.dst)
    routes = [shortest_route(t, f.src, f.dst) for f in flows]
    order = sorted(range(len(flows)), key=lambda j: flows[j].rate)
    out = []
    for i in order:
        e = fairness_query(t, flows, i, routes)
        out.append((flows[i], run_query(e, t, fuel=fuel, bound_var=BANDWIDTH)))
    return out


# ---------------------------------------------------------------------------
# QoS counters


def counter_var(prio: str) -> FieldId:
    return switch_quant(f"C_{prio}")


def _check_shares(shares: Sequence[tuple[str, int]]) -> None:
    seen = set()
    for prio, quota in shares:
        if prio in seen:
            raise QueryError(f"duplicate priority {prio!r}")
        if int(quota) != quota or quota < 1:
            raise QueryError(f"quota for {prio!r} must be a positive integer")
        seen.add(prio)
    if not shares:
        raise QueryError("QoS needs at least one priority")


def _round_end(shares: Sequence[tuple[str, int]]) -> Expr:
    full = seq(*(compare(counter_var(p), Comparator.EQ, q) for p, q in shares))
    reset = seq(*(assign(counter_var(p), 0) for p, _ in shares))
    # checked in this order so the packet passes exactly once
    return union(Not(full), seq(full, reset))


def _in_ports(ports: Sequence[str]) -> list[Expr]:
    return [union(*(TestEq(PT, str(p)) for p in ports))] if ports else []


def qos_policy(
    sw: str,
    in_ports: Sequence[str],
    out_port: str,
    shares: Sequence[tuple[str, int]],
    prio_field: FieldId = PRIORITY,
) -> Expr:
    """Counter-based bandwidth shares at one switch.

    Priority ``p`` may send ``quota_p`` packets per round; once every
    counter has reached its quota the round restarts.
    """
    _check_shares(shares)
    branches = []
    for prio, quota in shares:
        c = counter_var(prio)
        branches.append(
            seq(
                TestEq(prio_field, prio),
                compare(c, Comparator.LT, quota),
                Assign(PT, str(out_port)),
                assign(c, LinearTerm.var(c) + LinearTerm.const(1)),
            )
        )
    return seq(TestEq(SW, sw), *_in_ports(in_ports), union(*branches), _round_end(shares))


def queue_name(prio: str) -> str:
    return f"q_{prio}"


def qos_queue_policy(
    sw: str,
    shares: Sequence[tuple[str, int]],
    topology: Topology,
    out_port: str = "3",
    in_ports: Sequence[str] = (),
    prio_field: FieldId = PRIORITY,
) -> Expr:
    """Queued variant: packets wait in per-priority queues.

    A priority past its quota may still send when every other queue is
    empty; otherwise its packet stays queued.
    """
    _check_shares(shares)
    declared = {(q.switch, q.name) for q in topology.queues}
    for prio, _ in shares:
        if (sw, queue_name(prio)) not in declared:
            raise QueryError(f"queue {queue_name(prio)}@{sw} is not declared")
    enqueue = union(*(seq(TestEq(prio_field, p), Enq(queue_name(p), sw)) for p, _ in shares))
    branches = []
    for prio, quota in shares:
        c = counter_var(prio)
        mine = TestEq(prio_field, prio)
        deq = Deq(queue_name(prio), sw)
        others_empty = seq(*(QEmpty(queue_name(p), sw) for p, _ in shares if p != prio))
        branches.append(
            seq(mine, compare(c, Comparator.LT, quota), deq, Assign(PT, str(out_port)),
                assign(c, LinearTerm.var(c) + LinearTerm.const(1)))
        )
        branches.append(seq(mine, compare(c, Comparator.EQ, quota), others_empty, deq, Assign(PT, str(out_port))))
        if len(shares) > 1:
            branches.append(seq(mine, compare(c, Comparator.EQ, quota), Not(others_empty)))
    return seq(TestEq(SW, sw), *_in_ports(in_ports), enqueue, union(*branches), _round_end(shares))


def qos_seeds(
    sw: str,
    arrivals: Sequence[str],
    shares: Sequence[tuple[str, int]],
    in_port: str = "1",
    topology: Optional[Topology] = None,
    prio_field: FieldId = PRIORITY,
) -> list[World]:
    """One world per arriving packet, all sharing zeroed counters."""
    rho = {(sw, counter_var(p)): 0 for p, _ in shares}
    queues = topology.queue_store() if topology is not None else None
    return [
        make_world({SW: sw, PT: str(in_port), prio_field: prio, PACKET_ID: f"p{k}"}, rho, queues)
        for k, prio in enumerate(arrivals)
    ]


@dataclass(frozen=True)
class QosReport:
    forwarded: tuple[str, ...]  # priorities of forwarded packets, in arrival order
    result: EvalResult

    def count(self, prio: str) -> int:
        return sum(1 for p in self.forwarded if p == prio)


def simulate_qos(
    policy: Expr,
    seeds: Sequence[World],
    out_port: str,
    prio_field: FieldId = PRIORITY,
    fuel: int = 64,
) -> QosReport:
    """Run the packets through ``policy`` in arrival order with shared counters."""
    res = run_shared(policy, list(seeds), EvalConfig(fuel=fuel, mode=Mode.SHARED))
    fwd = []
    for outs in res.per_seed:
        if any(w.head.get(PT.name) == str(out_port) for w in outs):
            fwd.append(outs[0].head[prio_field.name])
    return QosReport(tuple(fwd), res)


# ---------------------------------------------------------------------------
# bundled example files


def data_path(name: str) -> Path:
    return Path(str(resources.files("wnetkat") / "data" / name))


def read_asset(name_or_path: str | Path) -> str:
    """Read a file, falling back to the bundled example of that name."""
    p = Path(name_or_path)
    if p.is_file():
        return p.read_text()
    bundled = data_path(p.name)
    if bundled.is_file():
        return bundled.read_text()
    raise FileNotFoundError(f"no such file: {name_or_path}")


def load_topology(name_or_path: str | Path) -> Topology:
    from .parser import parse_topology

    return parse_topology(read_asset(name_or_path))


def load_flows(name_or_path: str | Path, topology: Optional[Topology] = None) -> FlowSet:
    from .parser import parse_flows

    return parse_flows(read_asset(name_or_path), topology)

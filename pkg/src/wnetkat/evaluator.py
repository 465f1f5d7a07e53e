"""Set-lifted denotational evaluation of WNetKAT expressions.

Two modes are offered.  ``PER_WORLD`` is the plain semantics: every branch of
a union carries its own copy of the switch valuation.  ``SHARED`` runs a
batch of packets through one mutable switch valuation and queue store, so
counters written by one copy are seen by the copies processed after it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

from .algebra import Weight, format_weight
from .ast import (
    Assign,
    Deq,
    Drop,
    Dup,
    Enq,
    Expr,
    Not,
    QAssign,
    QEmpty,
    QTest,
    Seq,
    Skip,
    Star,
    TestEq,
    Union,
    has_queue_ops,
)
from .core import (
    FieldId,
    KindMismatch,
    UndeclaredField,
    UndefinedSwitchVariable,
    Value,
    World,
    WNetKATError,
    current_switch,
    dequeue,
    enqueue,
    packet_read,
    packet_write,
    state_read,
    state_write,
)


class Mode(enum.Enum):
    PER_WORLD = "per-world"
    SHARED = "shared"


class Outcome(enum.Enum):
    IS_DROP = "IsDrop"
    NOT_DROP = "NotDrop"
    UNKNOWN = "Unknown"


class WorldLimit(WNetKATError):
    """The evaluation produced more worlds than the configured limit."""


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation knobs.

    ``fuel`` bounds the number of unfoldings of every star.  ``max_dups``
    optionally discards worlds whose history records more than that many
    ``dup`` steps; because histories only grow, this restricts the result to
    short histories without changing it otherwise.  ``collapse_history``
    turns ``dup`` into a no-op, which is exact for deciding emptiness of
    queue-free expressions and keeps cyclic queries finite.
    """

    fuel: int = 64
    mode: Mode = Mode.PER_WORLD
    max_dups: Optional[int] = None
    collapse_history: bool = False
    max_worlds: int = 200_000

    def __post_init__(self):
        if self.fuel < 1:
            raise ValueError("fuel must be at least 1")


@dataclass(frozen=True)
class EvalResult:
    worlds: frozenset
    saturated: bool
    truncated: bool = False
    per_seed: tuple = ()

    def sorted_worlds(self) -> list[World]:
        return sorted(self.worlds, key=world_sort_key)


@dataclass(frozen=True)
class Verdict:
    """Outcome of a drop check plus an optional witness world."""

    outcome: Outcome
    witness: Optional[World] = None
    saturated: bool = True
    bound_value: Optional[Weight] = None

    @property
    def is_drop(self) -> bool:
        return self.outcome is Outcome.IS_DROP

    @property
    def not_drop(self) -> bool:
        return self.outcome is Outcome.NOT_DROP


# ---------------------------------------------------------------------------
# rendering helpers used for deterministic ordering


def render_value(v: Value) -> str:
    return v if isinstance(v, str) else format_weight(v)


def render_packet(pk) -> str:
    return "{" + ", ".join(f"{k}={render_value(pk[k])}" for k in sorted(pk)) + "}"


def render_world(w: World) -> str:
    hist = " <- ".join(render_packet(pk) for pk in w.history)
    parts = [hist]
    if len(w.rho):
        rho = ", ".join(
            f"{sw}.{f}={render_value(v)}" for (sw, f), v in sorted(w.rho.items(), key=lambda kv: kv[0])
        )
        parts.append(f"[{rho}]")
    queues = [(k, v) for k, v in w.queues.queues.items() if v]
    if queues:
        parts.append(
            "queues[" + ", ".join(f"{q}@{sw}:{len(v)}" for (sw, q), v in sorted(queues, key=lambda kv: kv[0])) + "]"
        )
    return " ".join(parts)


def world_sort_key(w: World):
    return (len(w.history), render_world(w))


def path_of(w: World, fields: Sequence[str] = ("sw", "pt")) -> list[tuple]:
    """Oldest-first list of the given field values along a world's history."""
    return [tuple(pk.get(f) for f in fields) for pk in reversed(w.history)]


def switch_path(w: World) -> list[str]:
    """Switches visited by a world's history, consecutive repeats merged."""
    out: list[str] = []
    for pk in reversed(w.history):
        sw = pk.get("sw")
        if sw is not None and (not out or out[-1] != sw):
            out.append(sw)
    return out


# ---------------------------------------------------------------------------
# shared helpers


def _read_quant(w: World, f: FieldId) -> Weight:
    if f.is_switch:
        sw = current_switch(w)
        v = state_read(w, sw, f)
        if v is None:
            raise UndefinedSwitchVariable(f"switch variable {f.name} is undefined at {sw}")
        return v
    v = packet_read(w, f)
    if v is None:
        raise UndeclaredField(f"field {f.name} is not declared for this packet")
    return v


def _read_sym(w: World, f: FieldId) -> Optional[Value]:
    if f.is_switch:
        return state_read(w, current_switch(w), f)
    v = packet_read(w, f)
    if v is None:
        raise UndeclaredField(f"field {f.name} is not declared for this packet")
    if not isinstance(v, str):
        raise KindMismatch(f"field {f.name} holds a quantity; declare it quant to compare it")
    return v


def _write(w: World, f: FieldId, v: Value) -> World:
    if f.is_switch:
        return state_write(w, current_switch(w), f, v)
    return packet_write(w, f, v)


def _qtest(w: World, e: QTest) -> bool:
    lookup = lambda f: _read_quant(w, f)  # noqa: E731
    return e.cmp.holds(e.lhs.evaluate(lookup), e.rhs.evaluate(lookup))


def _qassign(w: World, e: QAssign) -> World:
    return _write(w, e.field, e.rhs.evaluate(lambda f: _read_quant(w, f)))


def _queue_empty(w: World, e: QEmpty) -> bool:
    return not w.queues.contents(e.switch, e.queue)


# ---------------------------------------------------------------------------
# per-world evaluation


class _Run:
    def __init__(self, cfg: EvalConfig):
        self.cfg = cfg
        self.saturated = True
        self.truncated = False

    def ev(self, e: Expr, ws: frozenset) -> frozenset:
        if not ws:
            return ws
        t = type(e)
        if t is Skip:
            return ws
        if t is Drop:
            return frozenset()
        if t is Dup:
            if self.cfg.collapse_history:
                return ws
            out = set()
            cap = self.cfg.max_dups
            for w in ws:
                if cap is not None and len(w.history) > cap:
                    self.truncated = True
                    continue
                out.add(World(w.rho, (w.head,) + w.history, w.queues))
            return frozenset(out)
        if t is TestEq:
            return frozenset(w for w in ws if _read_sym(w, e.field) == e.value)
        if t is Assign:
            return frozenset(_write(w, e.field, e.value) for w in ws)
        if t is QTest:
            return frozenset(w for w in ws if _qtest(w, e))
        if t is QAssign:
            return frozenset(_qassign(w, e) for w in ws)
        if t is Not:
            return frozenset(w for w in ws if not self.ev(e.arg, frozenset((w,))))
        if t is Union:
            return self._limit(self.ev(e.left, ws) | self.ev(e.right, ws))
        if t is Seq:
            return self.ev(e.right, self.ev(e.left, ws))
        if t is Star:
            return self._star(e.arg, ws)
        if t is Enq:
            out = set()
            for w in ws:
                nw = enqueue(w, e.switch, e.queue)
                if nw is not None:
                    out.add(nw)
            return frozenset(out)
        if t is Deq:
            return frozenset(dequeue(w, e.switch, e.queue) for w in ws)
        if t is QEmpty:
            return frozenset(w for w in ws if _queue_empty(w, e))
        raise TypeError(f"cannot evaluate {type(e).__name__}")

    def _limit(self, ws: frozenset) -> frozenset:
        if len(ws) > self.cfg.max_worlds:
            raise WorldLimit(f"more than {self.cfg.max_worlds} worlds")
        return ws

    def _star(self, body: Expr, ws: frozenset) -> frozenset:
        acc = set(ws)
        frontier = ws
        for _ in range(self.cfg.fuel):
            nxt = frozenset(self.ev(body, frontier) - acc)
            if not nxt:
                return frozenset(acc)
            acc |= nxt
            self._limit(acc)
            frontier = nxt
        # one probe step decides whether the fuel happened to suffice
        if self.ev(body, frontier) - acc:
            self.saturated = False
        return frozenset(acc)


def evaluate(e: Expr, w: World, cfg: EvalConfig | None = None) -> EvalResult:
    """``[[e]](w)`` with star unfoldings bounded by ``cfg.fuel``."""
    return evaluate_many(e, (w,), cfg)


def evaluate_many(e: Expr, ws: Iterable[World], cfg: EvalConfig | None = None) -> EvalResult:
    cfg = cfg or EvalConfig()
    if cfg.mode is Mode.SHARED:
        return run_shared(e, list(ws), cfg)
    run = _Run(cfg)
    out = run.ev(e, frozenset(ws))
    return EvalResult(out, run.saturated, run.truncated)


# ---------------------------------------------------------------------------
# shared-state scheduler


class _Shared:
    def __init__(self, rho, queues, cfg: EvalConfig, budget: int):
        self.rho = rho
        self.queues = queues
        self.cfg = cfg
        self.budget = budget
        self.saturated = True

    def world(self, h: tuple) -> World:
        return World(self.rho, h, self.queues)

    def absorb(self, w: World) -> tuple:
        self.rho = w.rho
        self.queues = w.queues
        return w.history

    def ex(self, e: Expr, h: tuple) -> list[tuple]:
        t = type(e)
        if t is Skip:
            return [h]
        if t is Drop:
            return []
        if t is Dup:
            return [h] if self.cfg.collapse_history else [(h[0],) + h]
        if t is TestEq:
            return [h] if _read_sym(self.world(h), e.field) == e.value else []
        if t is QTest:
            return [h] if _qtest(self.world(h), e) else []
        if t is QEmpty:
            return [h] if _queue_empty(self.world(h), e) else []
        if t is Assign:
            return [self.absorb(_write(self.world(h), e.field, e.value))]
        if t is QAssign:
            return [self.absorb(_qassign(self.world(h), e))]
        if t is Not:
            return [] if self.ex(e.arg, h) else [h]
        if t is Union:
            return _ordered_unique(self.ex(e.left, h) + self.ex(e.right, h))
        if t is Seq:
            out: list[tuple] = []
            for x in self.ex(e.left, h):
                out.extend(self.ex(e.right, x))
            return _ordered_unique(out)
        if t is Star:
            return self._star(e.arg, h)
        if t is Enq:
            nw = enqueue(self.world(h), e.switch, e.queue)
            return [] if nw is None else [self.absorb(nw)]
        if t is Deq:
            return [self.absorb(dequeue(self.world(h), e.switch, e.queue))]
        raise TypeError(f"cannot evaluate {type(e).__name__}")

    def _star(self, body: Expr, h: tuple) -> list[tuple]:
        # breadth-first over iterations: every copy takes hop k before any takes hop k+1
        acc = [h]
        seen = {h}
        frontier = [h]
        for _ in range(self.cfg.fuel):
            nxt = []
            for x in frontier:
                for y in self.ex(body, x):
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            if not nxt:
                return acc
            acc.extend(nxt)
            frontier = nxt
            if len(seen) > self.budget:
                break
        self.saturated = False
        return acc


def _ordered_unique(items: list) -> list:
    seen = set()
    out = []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def run_shared(e: Expr, seeds: Sequence[World], cfg: EvalConfig | None = None) -> EvalResult:
    """Process ``seeds`` in order against one shared switch valuation and queue store.

    Union branches run left to right and see each other's state changes;
    stars advance all copies one iteration at a time.  The returned worlds
    carry the final shared state; ``per_seed`` lists each seed's outputs.
    """
    cfg = cfg or EvalConfig(mode=Mode.SHARED)
    if not seeds:
        return EvalResult(frozenset(), True)
    first = seeds[0]
    for s in seeds[1:]:
        if s.rho != first.rho or s.queues != first.queues:
            raise ValueError("shared-state seeds must start from one switch valuation and queue store")
    sched = _Shared(first.rho, first.queues, cfg, cfg.fuel * len(seeds))
    outputs = []
    for s in seeds:
        outputs.append(sched.ex(e, s.history))
    per_seed = tuple(tuple(World(sched.rho, h, sched.queues) for h in hs) for hs in outputs)
    worlds = frozenset(w for hs in per_seed for w in hs)
    return EvalResult(worlds, sched.saturated, False, per_seed)


# ---------------------------------------------------------------------------
# drop checking


def drop_check(e: Expr, inputs: Iterable[World], cfg: EvalConfig | None = None) -> Outcome:
    """Decide whether ``e`` maps every input to the empty set."""
    return _check(e, list(inputs), cfg or EvalConfig())[0]


def _check(e: Expr, inputs: list[World], cfg: EvalConfig) -> tuple[Outcome, EvalResult | None]:
    if not inputs:
        raise ValueError("drop_check needs at least one input world")
    if cfg.mode is Mode.SHARED:
        run_cfg = cfg
    else:
        # histories are never read without queues, so collapsing them is exact
        run_cfg = replace(cfg, collapse_history=cfg.collapse_history or not has_queue_ops(e))
    try:
        res = evaluate_many(e, inputs, run_cfg)
    except WorldLimit:
        return Outcome.UNKNOWN, None
    if res.worlds:
        return Outcome.NOT_DROP, res
    if res.saturated and not res.truncated:
        return Outcome.IS_DROP, res
    return Outcome.UNKNOWN, res


def find_witness(
    e: Expr,
    inputs: Sequence[World],
    cfg: EvalConfig | None = None,
    prefer: Callable[[World], object] | None = None,
) -> Optional[World]:
    """A full-history output of ``e``, searched by increasing star depth."""
    cfg = cfg or EvalConfig()
    key = prefer or world_sort_key
    for fuel in range(1, cfg.fuel + 1):
        depth_cfg = replace(cfg, fuel=fuel, collapse_history=False, max_dups=None)
        try:
            res = evaluate_many(e, inputs, depth_cfg)
        except WorldLimit:
            return None
        if res.worlds:
            return min(res.worlds, key=key)
        if res.saturated:
            return None
    return None


def check(e: Expr, inputs: Sequence[World], cfg: EvalConfig | None = None, witness: bool = True) -> Verdict:
    """Drop check that also produces a witness world on ``NotDrop``."""
    cfg = cfg or EvalConfig()
    inputs = list(inputs)
    outcome, res = _check(e, inputs, cfg)
    saturated = bool(res and res.saturated)
    if outcome is not Outcome.NOT_DROP:
        return Verdict(outcome, None, saturated)
    wit = None
    if witness and cfg.mode is Mode.PER_WORLD:
        wit = find_witness(e, inputs, cfg)
    if wit is None:
        wit = min(res.worlds, key=world_sort_key)
    return Verdict(outcome, wit, saturated)

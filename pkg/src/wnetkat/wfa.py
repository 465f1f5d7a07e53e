"""Weighted automata for the single-weight fragment of WNetKAT.

An expression is *weight-regular* for a structure when its only quantitative
behaviour is one packet field that starts at a constant, is updated by
``x <- x + k`` (additive structures) or ``x <- min{x, k}`` (min-product
structures) and is compared against a constant at the very end.  Such an
expression compiles to an automaton over letters ``(alpha, beta)`` of
complete symbolic packets, built from weighted Antimirov-style derivatives.

Automaton states are the start state, one state per (continuation, packet)
reached after a ``dup``, and an accepting sink.  A trace with ``n`` dups is
read as ``n + 1`` letters: ``(alpha, p0), (p0, p1), ..., (p_{n-1}, p_n)``;
the last letter enters the sink.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from .algebra import INF, Infinity, StructureKind, Weight, WeightStructure, format_weight
from .ast import (
    DROP,
    SKIP,
    Assign,
    Comparator,
    Deq,
    Drop,
    Dup,
    Enq,
    Expr,
    FuelExhausted,
    LinearTerm,
    Not,
    QAssign,
    QEmpty,
    QTest,
    Seq,
    Skip,
    SourceSpan,
    Star,
    TestEq,
    Union,
    assign,
    fields_of,
    flatten_seq,
    seq,
    symbols_of,
    union,
)
from .core import OTHER, FieldId, WNetKATError, make_world
from .evaluator import EvalConfig, evaluate_many


class NotWeightRegular(WNetKATError):
    """The expression falls outside the compilable fragment."""

    def __init__(self, message: str, atom: Optional[Expr] = None):
        self.atom = atom
        where = ""
        if atom is not None:
            from .parser import render_expr

            where = f" (at `{render_expr(atom, header=False)}`)"
        super().__init__(message + where)


class AutomatonTooLarge(WNetKATError):
    pass


class Divergence(WNetKATError):
    """An improving cycle makes the optimum unbounded."""


class NotIdempotent(WNetKATError):
    pass


@dataclass(frozen=True, eq=False)
class Weigh(Expr):
    """Internal atom: multiply the running weight by ``weight``."""

    weight: Weight
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def render(self) -> str:
        return f"<{format_weight(self.weight)}>"


# ---------------------------------------------------------------------------
# atoms


@dataclass(frozen=True)
class AtomSpace:
    """Complete assignments of the symbolic packet fields."""

    fields: tuple[FieldId, ...]
    domains: tuple[tuple[str, ...], ...]

    def atoms(self) -> Iterator[tuple]:
        return itertools.product(*self.domains)

    @property
    def size(self) -> int:
        n = 1
        for d in self.domains:
            n *= len(d)
        return n

    def index(self, f: FieldId) -> int:
        return self.fields.index(f)

    def render(self, atom: tuple) -> str:
        return "{" + ",".join(f"{f.name}={v}" for f, v in zip(self.fields, atom)) + "}"

    def of_packet(self, pk) -> tuple:
        return tuple(pk[f.name] for f in self.fields)

    def test(self, atom: tuple) -> Expr:
        return seq(*(TestEq(f, v) for f, v in zip(self.fields, atom)))

    def assignment(self, atom: tuple) -> Expr:
        return seq(*(Assign(f, v) for f, v in zip(self.fields, atom)))


def atom_space(e: Expr, extra: dict[FieldId, Iterable[str]] | None = None) -> AtomSpace:
    """Symbolic packet fields of ``e`` with the symbols it mentions plus ``_``."""
    syms = symbols_of(e)
    fs = {f for f in fields_of(e) if not f.quantitative and not f.is_switch}
    for f, vals in (extra or {}).items():
        fs.add(f)
        syms.setdefault(f.name, set()).update(vals)
    ordered = tuple(sorted(fs, key=lambda f: f.name))
    domains = tuple(tuple(sorted(syms.get(f.name, set()) | {OTHER})) for f in ordered)
    return AtomSpace(ordered, domains)


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class WeightRegular:
    expr: Expr
    structure: WeightStructure
    tracked: Optional[FieldId]
    body: Expr
    entry: Optional[Weight] = None
    final_test: Optional[tuple[Comparator, Weight]] = None

    @property
    def entry_weight(self) -> Weight:
        return self.structure.one if self.entry is None else self.entry


_ADDITIVE = (StructureKind.MIN_PLUS, StructureKind.MAX_PLUS)
_ALIGNED = {
    StructureKind.MIN_PLUS: (Comparator.LE, Comparator.LT),
    StructureKind.MAX_PLUS: (Comparator.GE, Comparator.GT),
    StructureKind.MAX_MIN: (Comparator.GE, Comparator.GT),
    StructureKind.ADD_MIN: (Comparator.GE, Comparator.GT),
}
# structures whose running weight moves monotonically towards failing the final test
_MONOTONE = (StructureKind.MIN_PLUS, StructureKind.MAX_MIN, StructureKind.ADD_MIN)


def _quant_atoms(e: Expr) -> list[Expr]:
    return [n for n in e.walk() if isinstance(n, (QAssign, QTest))]


def _constant(t: LinearTerm) -> Optional[Weight]:
    return t.constant if t.is_constant else None


def _threshold(e: Expr, x: FieldId) -> Optional[tuple[Comparator, Weight]]:
    if isinstance(e, QTest):
        if e.lhs.single_var() == x and e.rhs.is_constant:
            return e.cmp, e.rhs.constant
        if e.rhs.single_var() == x and e.lhs.is_constant:
            return e.cmp.flipped(), e.lhs.constant
    return None


def _min_update(e: Expr, x: FieldId) -> Optional[Weight]:
    """``k`` when ``e`` is a desugared ``x <- min{x, k}``."""
    if not isinstance(e, Union):
        return None
    branches = [e.left, e.right]
    k = None
    for b in branches:
        if not isinstance(b, Seq) or not isinstance(b.left, QTest):
            return None
        th = _threshold(b.left, x)
        if th is None:
            return None
        if k is not None and th[1] != k:
            return None
        k = th[1]
        act = b.right
        if not (isinstance(act, Skip) or (isinstance(act, QAssign) and act.field == x and _constant(act.rhs) == k)):
            return None
    if isinstance(k, Infinity):
        return None
    # confirm the behaviour on every region relative to k
    for v in (Fraction(0), k / 2, k, k + 1, INF):
        results = []
        for b in branches:
            cmp, c = _threshold(b.left, x)
            if cmp.holds(v, c):
                results.append(v if isinstance(b.right, Skip) else k)
        if results != [min(v, k)]:
            return None
    return k


class _Classifier:
    def __init__(self, s: WeightStructure, x: Optional[FieldId], final: Optional[tuple[Comparator, Weight]]):
        self.s = s
        self.x = x
        self.final = final

    def ir(self, e: Expr) -> Expr:
        if isinstance(e, (Drop, Skip, Dup, TestEq, Assign)):
            return e
        if isinstance(e, (Enq, Deq, QEmpty)):
            raise NotWeightRegular("queue operations cannot be compiled", e)
        if isinstance(e, Not):
            if _quant_atoms(e.arg):
                raise NotWeightRegular("negated quantitative test", e)
            return e
        if isinstance(e, QAssign):
            return self.update(e)
        if isinstance(e, QTest):
            th = _threshold(e, self.x) if self.x is not None else None
            if th is not None and th == self.final and self.s.kind in _MONOTONE:
                # implied by the final test since the weight only moves one way
                return SKIP
            raise NotWeightRegular("only the final test may compare the tracked weight", e)
        if isinstance(e, Union):
            if self.x is not None and self.s.kind not in _ADDITIVE:
                k = _min_update(e, self.x)
                if k is not None:
                    return Weigh(k)
            return Union(self.ir(e.left), self.ir(e.right))
        if isinstance(e, Seq):
            return Seq(self.ir(e.left), self.ir(e.right))
        if isinstance(e, Star):
            return Star(self.ir(e.arg))
        raise NotWeightRegular(f"unsupported node {type(e).__name__}", e)

    def update(self, e: QAssign) -> Expr:
        t = e.rhs
        if self.s.kind in _ADDITIVE:
            if (
                len(t.terms) == 1
                and t.terms[0] == (self.x, Fraction(1))
                and not isinstance(t.constant, Infinity)
                and t.constant >= 0
            ):
                return Weigh(t.constant)
            raise NotWeightRegular(f"expected {self.x.name} <- {self.x.name} + k", e)
        raise NotWeightRegular(f"expected {self.x.name} <- min{{{self.x.name}, k}}", e)


def classify_weight_regular(e: Expr, s: WeightStructure) -> WeightRegular:
    """Split ``e`` into entry weight, weighted body and final threshold."""
    for node in e.walk():
        if isinstance(node, (TestEq, Assign, QAssign)) and node.field.is_switch:
            raise NotWeightRegular("switch variables cannot be compiled", node)
        if isinstance(node, QTest) and any(f.is_switch for f in node.lhs.fields + node.rhs.fields):
            raise NotWeightRegular("switch variables cannot be compiled", node)
        if isinstance(node, (Enq, Deq, QEmpty)):
            raise NotWeightRegular("queue operations cannot be compiled", node)
    tracked: Optional[FieldId] = None
    for node in _quant_atoms(e):
        fs = set(node.lhs.fields + node.rhs.fields) if isinstance(node, QTest) else {node.field, *node.rhs.fields}
        for f in sorted(fs, key=lambda f: f.name):
            if tracked is None:
                tracked = f
            elif f != tracked:
                raise NotWeightRegular(f"second quantitative variable {f.name} next to {tracked.name}", node)

    items = flatten_seq(e)
    entry = None
    if tracked is not None:
        for i, it in enumerate(items):
            if not _quant_atoms(it):
                continue
            if isinstance(it, QAssign) and it.rhs.is_constant:
                entry = it.rhs.constant
                items = items[:i] + items[i + 1 :]
            break
    final = None
    if tracked is not None and items:
        th = _threshold(items[-1], tracked)
        if th is not None:
            if th[0] not in _ALIGNED[s.kind]:
                raise NotWeightRegular(
                    f"final test {th[0].value} does not match the {s.kind.value} order", items[-1]
                )
            final = th
            items = items[:-1]
    body = _Classifier(s, tracked, final).ir(seq(*items))
    for node in body.walk():
        if isinstance(node, QAssign) and node.rhs.is_constant:
            raise NotWeightRegular("constant assignment after the entry", node)
    return WeightRegular(e, s, tracked, body, entry, final)


# ---------------------------------------------------------------------------
# weighted derivatives


def _add(s: WeightStructure, acc: dict, key, w: Weight) -> None:
    if w == s.zero:
        return
    old = acc.get(key)
    acc[key] = w if old is None else s.plus(old, w)


def _items(e: Expr) -> tuple:
    return tuple(x for x in flatten_seq(e) if not isinstance(x, Skip))


class _Derivatives:
    def __init__(self, space: AtomSpace, s: WeightStructure):
        self.space = space
        self.s = s
        self.e_cache: dict = {}
        self.d_cache: dict = {}
        self.ec_cache: dict = {}
        self.dc_cache: dict = {}
        self.closure_cache: dict = {}

    # -- single expressions
    def E(self, e: Expr, a: tuple) -> dict:
        key = (e, a)
        hit = self.e_cache.get(key)
        if hit is None:
            hit = self._E(e, a)
            self.e_cache[key] = hit
        return hit

    def _E(self, e: Expr, a: tuple) -> dict:
        s = self.s
        t = type(e)
        if t is Skip:
            return {a: s.one}
        if t in (Drop, Dup):
            return {}
        if t is TestEq:
            return {a: s.one} if a[self.space.index(e.field)] == e.value else {}
        if t is Assign:
            b = list(a)
            b[self.space.index(e.field)] = e.value
            return {tuple(b): s.one}
        if t is Not:
            return {} if self.E(e.arg, a) else {a: s.one}
        if t is Weigh:
            return {a: e.weight} if e.weight != s.zero else {}
        if t is Union:
            out = dict(self.E(e.left, a))
            for b, w in self.E(e.right, a).items():
                _add(s, out, b, w)
            return out
        if t is Seq:
            out: dict = {}
            for b, w in self.E(e.left, a).items():
                for c, w2 in self.E(e.right, b).items():
                    _add(s, out, c, s.times(w, w2))
            return out
        if t is Star:
            return self.closure(e.arg, a)
        raise NotWeightRegular(f"cannot differentiate {type(e).__name__}", e)

    def D(self, e: Expr, a: tuple) -> dict:
        key = (e, a)
        hit = self.d_cache.get(key)
        if hit is None:
            hit = self._D(e, a)
            self.d_cache[key] = hit
        return hit

    def _D(self, e: Expr, a: tuple) -> dict:
        s = self.s
        t = type(e)
        if t is Dup:
            return {(a, ()): s.one}
        if t is Union:
            out = dict(self.D(e.left, a))
            for k, w in self.D(e.right, a).items():
                _add(s, out, k, w)
            return out
        if t is Seq:
            out: dict = {}
            rest = _items(e.right)
            for (b, cont), w in self.D(e.left, a).items():
                _add(s, out, (b, cont + rest), w)
            for b, w in self.E(e.left, a).items():
                for k, w2 in self.D(e.right, b).items():
                    _add(s, out, k, s.times(w, w2))
            return out
        if t is Star:
            out = {}
            for b, wx in self.closure(e.arg, a).items():
                for (c, cont), w in self.D(e.arg, b).items():
                    _add(s, out, (c, cont + (e,)), s.times(wx, w))
            return out
        return {}

    # -- continuations (tuples read as sequences)
    def E_cont(self, cont: tuple, a: tuple) -> dict:
        key = (cont, a)
        hit = self.ec_cache.get(key)
        if hit is not None:
            return hit
        s = self.s
        cur = {a: s.one}
        for item in cont:
            nxt: dict = {}
            for b, w in cur.items():
                for c, w2 in self.E(item, b).items():
                    _add(s, nxt, c, s.times(w, w2))
            cur = nxt
            if not cur:
                break
        self.ec_cache[key] = cur
        return cur

    def D_cont(self, cont: tuple, a: tuple) -> dict:
        key = (cont, a)
        hit = self.dc_cache.get(key)
        if hit is not None:
            return hit
        s = self.s
        out: dict = {}
        cur = {a: s.one}
        for i, item in enumerate(cont):
            rest = cont[i + 1 :]
            for b, w in cur.items():
                for (c, k), w2 in self.D(item, b).items():
                    _add(s, out, (c, k + rest), s.times(w, w2))
            nxt: dict = {}
            for b, w in cur.items():
                for c, w2 in self.E(item, b).items():
                    _add(s, nxt, c, s.times(w, w2))
            cur = nxt
            if not cur:
                break
        self.dc_cache[key] = out
        return out

    # -- star closure over the dup-free step relation
    def closure(self, body: Expr, a: tuple) -> dict:
        key = (body, a)
        hit = self.closure_cache.get(key)
        if hit is None:
            if self.s.idempotent:
                hit = self._closure_idempotent(body, a)
            else:
                hit = self._closure_sum(body, a)
            self.closure_cache[key] = hit
        return hit

    def _closure_idempotent(self, body: Expr, a: tuple) -> dict:
        s = self.s
        dist = {a: s.one}
        todo = deque([a])
        updates: dict = {}
        limit = self.space.size + 2
        while todo:
            b = todo.popleft()
            for c, w in self.E(body, b).items():
                cand = s.times(dist[b], w)
                old = dist.get(c)
                new = cand if old is None else s.plus(old, cand)
                if new != old:
                    dist[c] = new
                    updates[c] = updates.get(c, 0) + 1
                    if updates[c] > limit:
                        raise Divergence("star over an improving cycle has no finite weight")
                    todo.append(c)
        return dist

    def _closure_sum(self, body: Expr, a: tuple) -> dict:
        # non-idempotent plus: weights reachable through a cycle sum to infinity
        s = self.s
        succ: dict = {}
        order: list = []
        seen = {a}
        todo = [a]
        while todo:
            b = todo.pop()
            order.append(b)
            succ[b] = self.E(body, b)
            for c in succ[b]:
                if c not in seen:
                    seen.add(c)
                    todo.append(c)
        cyclic = _cyclic_nodes(succ)
        tainted = _reachable_from(cyclic, succ)
        indeg = {b: 0 for b in succ}
        for b in succ:
            for c in succ[b]:
                if c not in tainted and b not in tainted:
                    indeg[c] += 1
        val = {a: s.one}
        ready = deque(b for b in succ if indeg[b] == 0 and b not in tainted)
        while ready:
            b = ready.popleft()
            for c, w in succ[b].items():
                if c in tainted or b in tainted:
                    continue
                if b in val:
                    _add(s, val, c, s.times(val[b], w))
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        for b in tainted:
            val[b] = INF
        return val


def _cyclic_nodes(succ: dict) -> set:
    """Nodes lying on a cycle (Tarjan's strongly connected components)."""
    index: dict = {}
    low: dict = {}
    stack: list = []
    on: set = set()
    out: set = set()
    counter = itertools.count()

    def visit(v):
        index[v] = low[v] = next(counter)
        stack.append(v)
        on.add(v)
        for w in succ.get(v, {}):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            if len(comp) > 1 or v in succ.get(v, {}):
                out.update(comp)

    for v in list(succ):
        if v not in index:
            visit(v)
    return out


def _reachable_from(starts: set, succ: dict) -> set:
    seen = set(starts)
    todo = list(starts)
    while todo:
        b = todo.pop()
        for c in succ.get(b, {}):
            if c not in seen:
                seen.add(c)
                todo.append(c)
    return seen


# ---------------------------------------------------------------------------
# automata

START = 0
ACCEPT = 1


@dataclass(eq=False)
class WeightedAutomaton:
    states: tuple[int, ...]
    start: int
    finals: frozenset
    structure: WeightStructure
    trans: dict  # (src, (alpha, beta), dst) -> weight
    entry: Weight
    space: AtomSpace
    tracked: Optional[FieldId] = None
    final_test: Optional[tuple[Comparator, Weight]] = None
    labels: dict = field(default_factory=dict)

    def out_edges(self, src: int) -> list[tuple[tuple, int, Weight]]:
        return self._index().get(src, [])

    def _index(self) -> dict:
        idx = getattr(self, "_idx", None)
        if idx is None:
            idx = {}
            for (src, letter, dst), w in sorted(self.trans.items(), key=_trans_key):
                idx.setdefault(src, []).append((letter, dst, w))
            self._idx = idx
        return idx

    def word_weight(self, letters: Sequence[tuple]) -> Weight:
        """Total weight of a letter sequence (entry weight included)."""
        s = self.structure
        vec = {self.start: self.entry}
        for letter in letters:
            nxt: dict = {}
            for src, w in vec.items():
                for lt, dst, tw in self.out_edges(src):
                    if lt == letter:
                        _add(s, nxt, dst, s.times(w, tw))
            vec = nxt
        return s.sum(w for st, w in vec.items() if st in self.finals)

    def to_text(self) -> str:
        s = self.structure
        lines = [
            f"structure {s.kind.value}",
            f"entry {format_weight(self.entry)}",
            f"start {self.start}",
            "final " + " ".join(str(f) for f in sorted(self.finals)),
        ]
        if self.tracked is not None:
            lines.append(f"# tracked {self.tracked.name}")
        if self.final_test is not None:
            lines.append(f"# test {self.final_test[0].value} {format_weight(self.final_test[1])}")
        for (src, (a, b), dst), w in sorted(self.trans.items(), key=_trans_key):
            r = self.space.render
            lines.append(f"{src} -- ({r(a)},{r(b)}) / {format_weight(w)} --> {dst}")
        return "\n".join(lines) + "\n"


def _trans_key(item):
    (src, (a, b), dst), _ = item
    return (src, dst, a, b)


def expr_to_wfa(
    wr: WeightRegular,
    space: Optional[AtomSpace] = None,
    max_states: int = 100_000,
) -> WeightedAutomaton:
    """Compile a classified expression to a weighted automaton."""
    s = wr.structure
    space = space or atom_space(wr.expr)
    if space.size > max_states:
        raise AutomatonTooLarge(f"{space.size} atoms exceed the cap of {max_states}")
    der = _Derivatives(space, s)
    ids: dict = {}
    labels = {START: "start", ACCEPT: "accept"}
    trans: dict = {}
    todo: deque = deque()

    def state(cont: tuple, atom: tuple) -> int:
        key = (cont, atom)
        sid = ids.get(key)
        if sid is None:
            sid = len(ids) + 2
            if sid >= max_states:
                raise AutomatonTooLarge(f"more than {max_states} states")
            ids[key] = sid
            labels[sid] = _label(cont, atom, space)
            todo.append((sid, cont, atom))
        return sid

    def emit(src: int, cont: tuple, a: tuple) -> None:
        for b, w in der.E_cont(cont, a).items():
            _add(s, trans, (src, (a, b), ACCEPT), w)
        for (b, k), w in der.D_cont(cont, a).items():
            _add(s, trans, (src, (a, b), state(k, b)), w)

    body = _items(wr.body)
    for a in space.atoms():
        emit(START, body, a)
    while todo:
        sid, cont, atom = todo.popleft()
        emit(sid, cont, atom)
    return WeightedAutomaton(
        states=tuple(range(len(ids) + 2)),
        start=START,
        finals=frozenset({ACCEPT}),
        structure=s,
        trans=trans,
        entry=wr.entry_weight,
        space=space,
        tracked=wr.tracked,
        final_test=wr.final_test,
        labels=labels,
    )


def _label(cont: tuple, atom: tuple, space: AtomSpace) -> str:
    from .parser import render_expr

    body = "; ".join(render_expr(x, header=False) for x in cont) or "skip"
    return f"{space.render(atom)} | {body}"


def compile_expr(e: Expr, s: WeightStructure, **kw) -> WeightedAutomaton:
    return expr_to_wfa(classify_weight_regular(e, s), **kw)


# ---------------------------------------------------------------------------
# queries on automata


def _support_reaches(a: WeightedAutomaton) -> bool:
    seen = {a.start}
    todo = [a.start]
    while todo:
        st = todo.pop()
        if st in a.finals:
            return True
        for _, dst, w in a.out_edges(st):
            if w != a.structure.zero and dst not in seen:
                seen.add(dst)
                todo.append(dst)
    return False


def best_path_value(a: WeightedAutomaton, prefer_max: bool) -> Optional[Weight]:
    """Best ``entry * path`` value over accepting paths under max or min selection."""
    s = a.structure
    pick = max if prefer_max else min
    dist = {a.start: a.entry}
    n = len(a.states)
    for _ in range(n + 1):
        changed = False
        for src in list(dist):
            for _, dst, w in a.out_edges(src):
                cand = s.times(dist[src], w)
                old = dist.get(dst)
                new = cand if old is None else pick(old, cand)
                if new != old:
                    dist[dst] = new
                    changed = True
        if not changed:
            break
    else:
        if prefer_max:
            return INF
        raise Divergence("path values did not settle")
    vals = [dist[f] for f in a.finals if f in dist]
    return pick(vals) if vals else None


def emptiness(a: WeightedAutomaton) -> bool:
    """True iff no accepted word has non-zero weight (and meets the final test)."""
    s = a.structure
    if a.entry == s.zero or not _support_reaches(a):
        return True
    if a.final_test is None:
        return False
    cmp, k = a.final_test
    best = best_path_value(a, prefer_max=cmp in (Comparator.GE, Comparator.GT))
    return best is None or not cmp.holds(best, k)


def optimal_weight(a: WeightedAutomaton) -> Weight:
    """Sum over accepted paths of ``entry * path weight`` for idempotent plus.

    The final test is aligned with plus, so the best path passes it whenever
    any path does; an empty automaton has optimum zero.
    """
    s = a.structure
    if not s.idempotent:
        raise NotIdempotent(f"{s.kind.value} has a non-idempotent plus; no optimum is defined")
    if emptiness(a):
        return s.zero
    dist = {a.start: a.entry}
    n = len(a.states)
    for _ in range(n + 1):
        changed = False
        for src in list(dist):
            for _, dst, w in a.out_edges(src):
                cand = s.times(dist[src], w)
                old = dist.get(dst)
                new = cand if old is None else s.plus(old, cand)
                if new != old:
                    dist[dst] = new
                    changed = True
        if not changed:
            break
    else:
        raise Divergence("an improving cycle makes the optimum unbounded")
    return s.sum(dist[f] for f in a.finals if f in dist)


def accepting_paths(a: WeightedAutomaton, max_len: int) -> Iterator[list[tuple[tuple, int, Weight]]]:
    """Accepting paths with at most ``max_len`` letters, depth first."""
    zero = a.structure.zero

    def go(st: int, path: list):
        if st in a.finals and path:
            yield list(path)
        if len(path) >= max_len:
            return
        for letter, dst, w in a.out_edges(st):
            if w == zero:
                continue
            path.append((letter, dst, w))
            yield from go(dst, path)
            path.pop()

    yield from go(a.start, [])


def wfa_to_expr(a: WeightedAutomaton, max_len: int) -> Expr:
    """Union of one expression per accepting path of at most ``max_len`` letters.

    Each path ``alpha -> p0 -> ... -> pn`` becomes
    ``alpha; x <- entry; p0; x <- d1; dup; p1; x <- d2; ...; pn; x <- d_{n+1}``
    where ``d_i`` is the running product of the transition weights.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    s = a.structure
    x = a.tracked
    branches = []
    for path in accepting_paths(a, max_len):
        alpha = path[0][0][0]
        parts: list[Expr] = [a.space.test(alpha)]
        acc = a.entry
        if x is not None:
            parts.append(assign(x, acc))
        for (letter, dst, w) in path:
            acc = s.times(acc, w)
            parts.append(a.space.assignment(letter[1]))
            if x is not None:
                parts.append(assign(x, acc))
            if dst not in a.finals:
                parts.append(DUP_EXPR)
        if a.final_test is not None and x is not None:
            parts.append(QTest(LinearTerm.var(x), a.final_test[0], LinearTerm.const(a.final_test[1])))
        branches.append(seq(*parts))
    return union(*branches) if branches else DROP


DUP_EXPR = Dup()


# ---------------------------------------------------------------------------
# reduced strings


@dataclass(frozen=True)
class ReducedString:
    """``alpha omega p0 d0 dup p1 d1 ... dup pn dn`` with one tracked weight."""

    alpha: tuple
    omega: Optional[Weight]
    segments: tuple[tuple[tuple, Optional[Weight]], ...]

    @property
    def dups(self) -> int:
        return len(self.segments) - 1

    @property
    def letters(self) -> tuple:
        pkts = [self.alpha] + [p for p, _ in self.segments]
        return tuple(zip(pkts, pkts[1:]))

    @property
    def final_weight(self) -> Optional[Weight]:
        return self.segments[-1][1]

    def render(self, space: AtomSpace) -> str:
        def w(v):
            return "" if v is None else f" [{format_weight(v)}]"

        segs = " dup ".join(f"{space.render(p)}{w(d)}" for p, d in self.segments)
        return f"{space.render(self.alpha)}{w(self.omega)} {segs}"


def reduce(
    e: Expr,
    max_dups: int,
    structure: Optional[WeightStructure] = None,
    space: Optional[AtomSpace] = None,
    fuel: int = 64,
) -> frozenset:
    """Reduced strings of ``e`` with at most ``max_dups`` dups, by evaluation."""
    space = space or atom_space(e)
    qs = sorted((f for f in fields_of(e) if f.quantitative), key=lambda f: f.name)
    if len(qs) > 1 or any(f.is_switch for f in fields_of(e)):
        raise NotWeightRegular("reduced strings track one packet quantity")
    x = qs[0] if qs else None
    omega = (structure.one if structure is not None else Fraction(0)) if x is not None else None
    out = set()
    cfg = EvalConfig(fuel=fuel, max_dups=max_dups)
    for alpha in space.atoms():
        pk = {f: v for f, v in zip(space.fields, alpha)}
        if x is not None:
            pk[x] = omega
        res = evaluate_many(e, [make_world(pk)], cfg)
        if not res.saturated:
            raise FuelExhausted(f"star did not saturate within fuel {fuel}")
        for w in res.worlds:
            segs = tuple(
                (space.of_packet(p), p[x.name] if x is not None else None) for p in reversed(w.history)
            )
            out.add(ReducedString(alpha, omega, segs))
    return frozenset(out)


def word_weights(strings: Iterable[ReducedString], s: WeightStructure) -> dict:
    """Sum of final weights per letter sequence."""
    out: dict = {}
    for r in strings:
        w = r.final_weight if r.final_weight is not None else s.one
        _add(s, out, r.letters, w)
    return out

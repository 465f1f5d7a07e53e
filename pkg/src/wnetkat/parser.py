"""Concrete syntax: expressions, topology files, flow files, rendering.

Field kinds are inferred.  A field is quantitative when it is declared so in a
``fields:`` header or when the program uses it arithmetically (``+``, ``-``,
coefficients, ``min``/``max``, ordering comparators, rational constants), and
the property propagates through ``x <- y`` and ``x = y``.  Everything else is
a symbolic packet field.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .algebra import INF, Infinity, Weight, format_weight, parse_weight
from .ast import (
    Assign,
    Comparator,
    Deq,
    Drop,
    Dup,
    Enq,
    Expr,
    LinearTerm,
    MinMax,
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
    assign_rhs,
    fields_of,
    test_rhs,
)
from .core import FieldId, FieldKind, Scope, WNetKATError


class ParseError(WNetKATError):
    def __init__(self, message: str, span: SourceSpan | None = None):
        self.message = message
        self.span = span
        where = f"{span}: " if span else ""
        super().__init__(where + message)


KEYWORDS = {"drop", "skip", "dup", "min", "max", "inf", "EQ", "DQ", "EMPTY", "fields"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><-|<=|>=|!=|[<>=;&*!(){},+\-@:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | eof
    text: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(line, col, pos, pos + 1))
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Token(kind, m.group(), SourceSpan(line, col, pos, m.end())))
        pos = m.end()
    # end of input sits right after the last token, not after trailing blank lines
    if toks:
        last = toks[-1].span
        end = SourceSpan(last.line, last.column + (last.end - last.start), last.end, last.end)
    else:
        end = SourceSpan(1, 1, 0, 0)
    toks.append(Token("eof", "", end))
    return toks


# ---------------------------------------------------------------------------
# raw syntax tree produced by the first pass

# linear term: list of (coefficient, name or None, constant weight or None, span)
# rhs: ("lin", parts) | ("min"/"max", [rhs, ...])


@dataclass
class _Raw:
    tag: str
    args: tuple
    span: SourceSpan


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.decls: dict[str, FieldId] = {}

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise ParseError(f"expected {text!r} but found {self.tok.text or 'end of input'!r}", self.tok.span)
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            raise ParseError(f"expected {what} but found {t.text or 'end of input'!r}", t.span)
        return self.advance()

    # -- header
    def header(self) -> None:
        while self.at("fields") and self.peek().text == ":":
            self.advance()
            self.advance()
            while True:
                name = self.ident("field name")
                kind_tok = self.ident("field kind")
                if kind_tok.text not in ("sym", "quant"):
                    raise ParseError("field kind must be 'sym' or 'quant'", kind_tok.span)
                scope = Scope.PACKET
                if self.tok.kind == "ident" and self.tok.text in ("packet", "switch") and self.tok.span.line == kind_tok.span.line:
                    scope = Scope(self.advance().text)
                if name.text in self.decls:
                    raise ParseError(f"field {name.text} declared twice", name.span)
                self.decls[name.text] = FieldId(name.text, FieldKind(kind_tok.text), scope)
                if not self.at(","):
                    break
                self.advance()

    # -- expressions
    def expr(self) -> _Raw:
        left = self.term()
        while self.at("&"):
            op = self.advance()
            right = self.term()
            left = _Raw("union", (left, right), op.span)
        return left

    def term(self) -> _Raw:
        left = self.unary()
        while self.at(";"):
            op = self.advance()
            right = self.unary()
            left = _Raw("seq", (left, right), op.span)
        return left

    def unary(self) -> _Raw:
        if self.at("!"):
            op = self.advance()
            return _Raw("not", (self.unary(),), op.span)
        node = self.primary()
        while self.at("*"):
            op = self.advance()
            node = _Raw("star", (node,), op.span)
        return node

    def primary(self) -> _Raw:
        t = self.tok
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "ident" and t.text in ("drop", "skip", "dup"):
            self.advance()
            return _Raw(t.text, (), t.span)
        if t.kind == "ident" and t.text in ("EQ", "DQ", "EMPTY"):
            self.advance()
            q = self.ident("queue name")
            self.expect("@")
            sw = self.ident("switch name")
            return _Raw("queue", (t.text, q.text, sw.text), t.span)
        if t.kind == "ident" and t.text not in KEYWORDS:
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "<-":
                self.advance()
                self.advance()
                return _Raw("assign", (t.text, self.rhs()), t.span)
            if nxt.kind == "op" and nxt.text in ("=", "!="):
                self.advance()
                self.advance()
                rhs = self.rhs()
                return _Raw("eq" if nxt.text == "=" else "neq", (t.text, rhs), t.span)
        if t.kind in ("ident", "num") or (t.kind == "op" and t.text == "-"):
            if t.kind == "ident" and t.text in KEYWORDS - {"inf"}:
                raise ParseError(f"unexpected keyword {t.text!r}", t.span)
            lhs = self.linear()
            cmp_tok = self.tok
            if cmp_tok.kind != "op" or cmp_tok.text not in ("<", ">", "<=", ">=", "=", "!="):
                raise ParseError(f"expected a comparator but found {cmp_tok.text or 'end of input'!r}", cmp_tok.span)
            self.advance()
            return _Raw("cmp", (lhs, cmp_tok.text, self.rhs()), t.span)
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.span)

    def rhs(self):
        t = self.tok
        if t.kind == "ident" and t.text in ("min", "max"):
            self.advance()
            self.expect("{")
            args = [self.rhs()]
            while self.at(","):
                self.advance()
                args.append(self.rhs())
            self.expect("}")
            if len(args) < 2:
                raise ParseError(f"{t.text} needs at least two operands", t.span)
            return (t.text, args, t.span)
        return ("lin", self.linear(), t.span)

    def linear(self) -> list:
        parts = []
        sign = 1
        if self.at("-"):
            self.advance()
            sign = -1
        parts.append(self.lin_atom(sign))
        while self.at("+") or self.at("-"):
            sign = 1 if self.advance().text == "+" else -1
            parts.append(self.lin_atom(sign))
        return parts

    def lin_atom(self, sign: int):
        t = self.tok
        if t.kind == "num":
            self.advance()
            w = parse_weight(t.text)
            if self.at("*") and self.peek().kind == "ident" and self.peek().text not in KEYWORDS:
                self.advance()
                name = self.advance()
                return (sign * w, name.text, None, t.text, name.span)
            return (sign, None, w, t.text, t.span)
        if t.kind == "ident" and t.text == "inf":
            self.advance()
            return (sign, None, INF, t.text, t.span)
        name = self.ident("field or number")
        return (Fraction(sign), name.text, None, None, name.span)


# ---------------------------------------------------------------------------
# kind inference and resolution


def _is_plain(rhs) -> bool:
    """A right-hand side that could also be read as a symbol."""
    if rhs[0] != "lin" or len(rhs[1]) != 1:
        return False
    coef, name, const, text, _ = rhs[1][0]
    if name is not None:
        return coef == 1
    return coef == 1 and isinstance(const, Fraction) and const.denominator == 1 and "." not in text and "/" not in text


def _rhs_names(rhs) -> list[str]:
    if rhs[0] == "lin":
        return [p[1] for p in rhs[1] if p[1] is not None]
    out = []
    for a in rhs[1]:
        out.extend(_rhs_names(a))
    return out


def _walk(raw: _Raw):
    stack = [raw]
    while stack:
        r = stack.pop()
        yield r
        if r.tag in ("union", "seq"):
            stack.extend(r.args)
        elif r.tag in ("not", "star"):
            stack.append(r.args[0])


def _infer_quantitative(raw: _Raw, decls: dict[str, FieldId]) -> set[str]:
    quant = {n for n, f in decls.items() if f.quantitative}
    declared_sym = {n for n, f in decls.items() if not f.quantitative}
    links: list[tuple[str, str]] = []
    for r in _walk(raw):
        if r.tag == "cmp":
            lhs, _, rhs = r.args
            quant.update(p[1] for p in lhs if p[1] is not None)
            quant.update(_rhs_names(rhs))
        elif r.tag in ("assign", "eq", "neq"):
            name, rhs = r.args
            if _is_plain(rhs):
                _, other, _, _, _ = rhs[1][0]
                if other is not None:
                    links.append((name, other))
            else:
                quant.add(name)
                quant.update(_rhs_names(rhs))
    changed = True
    while changed:
        changed = False
        for a, b in links:
            if b in quant and a not in quant:
                quant.add(a)
                changed = True
            if a in quant and b not in quant and b not in declared_sym:
                quant.add(b)
                changed = True
    return quant


class _Resolver:
    def __init__(self, decls: dict[str, FieldId], quant: set[str]):
        self.decls = decls
        self.quant = quant

    def field(self, name: str, span: SourceSpan) -> FieldId:
        f = self.decls.get(name)
        if f is not None:
            if name in self.quant and not f.quantitative:
                raise ParseError(f"symbolic field {name} used as a quantity", span)
            return f
        if name in self.quant:
            return FieldId(name, FieldKind.QUANTITATIVE)
        return FieldId(name)

    def linear(self, parts) -> LinearTerm:
        terms = []
        const: Weight = Fraction(0)
        for coef, name, c, _, span in parts:
            if name is not None:
                f = self.field(name, span)
                if not f.quantitative:
                    raise ParseError(f"symbolic field {name} used in arithmetic", span)
                terms.append((f, coef))
            elif isinstance(c, Infinity):
                if coef < 0:
                    raise ParseError("cannot subtract inf", span)
                const = INF
            elif not isinstance(const, Infinity):
                const = const + coef * c
        return LinearTerm.of(terms, const)

    def rhs(self, rhs):
        if rhs[0] == "lin":
            return self.linear(rhs[1])
        return MinMax(rhs[0], tuple(self.rhs(a) for a in rhs[1]))

    def symbol(self, rhs, span) -> str:
        if not _is_plain(rhs):
            raise ParseError("expected a symbol", span)
        _, name, c, text, _ = rhs[1][0]
        return name if name is not None else text

    def build(self, r: _Raw) -> Expr:
        tag, span = r.tag, r.span
        if tag == "drop":
            return Drop(span=span)
        if tag == "skip":
            return Skip(span=span)
        if tag == "dup":
            return Dup(span=span)
        if tag == "union":
            return Union(self.build(r.args[0]), self.build(r.args[1]), span=span)
        if tag == "seq":
            return Seq(self.build(r.args[0]), self.build(r.args[1]), span=span)
        if tag == "star":
            return Star(self.build(r.args[0]), span=span)
        if tag == "not":
            inner = self.build(r.args[0])
            try:
                return Not(inner, span=span)
            except WNetKATError as exc:
                raise ParseError(str(exc), span) from None
        if tag == "queue":
            op, q, sw = r.args
            cls = {"EQ": Enq, "DQ": Deq, "EMPTY": QEmpty}[op]
            return cls(q, sw, span=span)
        if tag == "assign":
            name, rhs = r.args
            f = self.field(name, span)
            if f.quantitative:
                e = assign_rhs(f, self.rhs(rhs))
                return _with_span(e, span)
            return Assign(f, self.symbol(rhs, span), span=span)
        if tag in ("eq", "neq"):
            name, rhs = r.args
            f = self.field(name, span)
            if f.quantitative:
                e = test_rhs(LinearTerm.var(f), Comparator.EQ, self.rhs(rhs))
                e = _with_span(e, span)
            else:
                e = TestEq(f, self.symbol(rhs, span), span=span)
            return Not(e, span=span) if tag == "neq" else e
        if tag == "cmp":
            lhs, op, rhs = r.args
            left = self.linear(lhs)
            if op == "!=":
                return Not(_with_span(test_rhs(left, Comparator.EQ, self.rhs(rhs)), span), span=span)
            return _with_span(test_rhs(left, Comparator(op), self.rhs(rhs)), span)
        raise AssertionError(tag)


def _with_span(e: Expr, span: SourceSpan) -> Expr:
    if isinstance(e, (QAssign, QTest)) and e.span is None:
        return type(e)(*(getattr(e, n) for n in e._names()), span=span)
    return e


def parse_expr(text: str, fields: Iterable[FieldId] = ()) -> Expr:
    """Parse a WNetKAT expression.

    ``fields`` pre-declares field kinds/scopes in addition to any ``fields:``
    header in ``text``.
    """
    p = _Parser(text)
    for f in fields:
        p.decls[f.name] = f
    p.header()
    if p.tok.kind == "eof":
        raise ParseError("empty expression", p.tok.span)
    raw = p.expr()
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p.tok.text!r}", p.tok.span)
    quant = _infer_quantitative(raw, p.decls)
    for name in quant:
        f = p.decls.get(name)
        if f is not None and not f.quantitative:
            span = next((r.span for r in _walk(raw) if r.args and r.args[0] == name), None)
            raise ParseError(f"symbolic field {name} used as a quantity", span)
    return _Resolver(p.decls, quant).build(raw)


# ---------------------------------------------------------------------------
# rendering

_UNION, _SEQ, _UNARY = 0, 1, 2


def render_linear(t: LinearTerm) -> str:
    def coef(c: Fraction, f: FieldId) -> str:
        return f.name if c == 1 else f"{format_weight(c)}*{f.name}"

    pos = [coef(c, f) for f, c in t.terms if c > 0]
    neg = [coef(-c, f) for f, c in t.terms if c < 0]
    k = t.constant
    if isinstance(k, Infinity) or k > 0:
        pos.append(format_weight(k))
    elif k < 0:
        neg.append(format_weight(-k))
    if not pos:
        pos.append("0")
    return " + ".join(pos) + "".join(f" - {n}" for n in neg)


def _atom(e: Expr) -> Optional[str]:
    if isinstance(e, Drop):
        return "drop"
    if isinstance(e, Skip):
        return "skip"
    if isinstance(e, Dup):
        return "dup"
    if isinstance(e, TestEq):
        return f"{e.field.name}={e.value}"
    if isinstance(e, Assign):
        return f"{e.field.name} <- {e.value}"
    if isinstance(e, QAssign):
        return f"{e.field.name} <- {render_linear(e.rhs)}"
    if isinstance(e, QTest):
        return f"{render_linear(e.lhs)} {e.cmp.value} {render_linear(e.rhs)}"
    if isinstance(e, Enq):
        return f"EQ {e.queue}@{e.switch}"
    if isinstance(e, Deq):
        return f"DQ {e.queue}@{e.switch}"
    if isinstance(e, QEmpty):
        return f"EMPTY {e.queue}@{e.switch}"
    return None


def _render(e: Expr, level: int) -> str:
    a = _atom(e)
    if a is not None:
        # comparisons bind looser than the postfix star
        if level > _UNARY and isinstance(e, (QTest, QAssign, TestEq, Assign)):
            return f"({a})"
        return a
    if isinstance(e, Union):
        s = f"{_render(e.left, _UNION)} & {_render(e.right, _SEQ)}"
        return s if level <= _UNION else f"({s})"
    if isinstance(e, Seq):
        s = f"{_render(e.left, _SEQ)}; {_render(e.right, _UNARY)}"
        return s if level <= _SEQ else f"({s})"
    if isinstance(e, Star):
        inner = e.arg
        body = _render(inner, _UNARY + 1) if not isinstance(inner, Star) else _render(inner, _UNARY)
        return f"{body}*"
    if isinstance(e, Not):
        s = "!" + _render(e.arg, _UNARY)
        return s if level <= _UNARY else f"({s})"
    render_hook = getattr(e, "render", None)
    if render_hook is not None:
        return render_hook()
    raise TypeError(f"cannot render {type(e).__name__}")


def render_expr(e: Expr, header: bool = True) -> str:
    """Render ``e`` so that ``parse_expr`` gives back an equal expression.

    With ``header`` set, quantitative and switch-scoped fields are declared in
    a leading ``fields:`` line so their kinds survive the round trip.
    """
    body = _render(e, _UNION)
    if not header:
        return body
    decls = sorted(
        (f for f in fields_of(e) if f.quantitative or f.is_switch),
        key=lambda f: f.name,
    )
    if not decls:
        return body
    line = ", ".join(f"{f.name} {f.kind.value} {f.scope.value}" for f in decls)
    return f"fields: {line}\n{body}"


# ---------------------------------------------------------------------------
# topology and flow files


def _kv(tok: str, line_no: int) -> tuple[str, str]:
    if "=" not in tok:
        raise ParseError(f"expected key=value, found {tok!r}", SourceSpan(line_no, 1, 0, 0))
    k, v = tok.split("=", 1)
    return k, v


def _weight(text: str, line_no: int, what: str) -> Weight:
    span = SourceSpan(line_no, 1, 0, 0)
    if text.startswith("-"):
        raise ParseError(f"negative {what} {text!r}", span)
    try:
        return parse_weight(text)
    except ValueError:
        raise ParseError(f"malformed {what} {text!r}", span) from None


def _records(text: str):
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield i, line.split()


def parse_topology(text: str):
    """Parse ``node``/``link``/``queue`` records into a Topology."""
    from .netmodel import Link, QueueDecl, Topology

    declared: list[str] = []
    raw_links = []
    queues = []
    for no, parts in _records(text):
        span = SourceSpan(no, 1, 0, 0)
        head = parts[0]
        if head == "node":
            if len(parts) != 2:
                raise ParseError("expected: node <name>", span)
            if parts[1] in declared:
                raise ParseError(f"node {parts[1]} declared twice", span)
            declared.append(parts[1])
        elif head == "link":
            pos = [p for p in parts[1:] if "=" not in p and p != "dir"]
            opts = dict(_kv(p, no) for p in parts[1:] if "=" in p)
            directed = "dir" in parts[1:]
            unknown = set(opts) - {"cost", "cap"}
            if unknown:
                raise ParseError(f"unknown link attribute {sorted(unknown)[0]!r}", span)
            if len(pos) == 4:
                u, up, v, vp = pos
            elif len(pos) == 2:
                (u, v), up, vp = pos, None, None
            else:
                raise ParseError("expected: link <u> [<uport>] <v> [<vport>] cost=<w> cap=<w> [dir]", span)
            cost = _weight(opts.get("cost", "0"), no, "cost")
            cap = _weight(opts.get("cap", "inf"), no, "capacity")
            raw_links.append((no, u, up, v, vp, cost, cap, directed))
        elif head == "queue":
            pos = [p for p in parts[1:] if "=" not in p]
            opts = dict(_kv(p, no) for p in parts[1:] if "=" in p)
            if len(pos) != 2:
                raise ParseError("expected: queue <switch> <name> cap=<n>", span)
            cap_text = opts.get("cap")
            cap = 64 if cap_text is None else None
            if cap_text is not None:
                if not cap_text.isdigit() or int(cap_text) < 1:
                    raise ParseError(f"queue capacity must be a positive integer, got {cap_text!r}", span)
                cap = int(cap_text)
            queues.append((no, pos[0], pos[1], cap))
        else:
            raise ParseError(f"unknown record {head!r}", span)

    nodes = list(declared)
    strict = bool(declared)

    def touch(n: str, no: int):
        if n not in nodes:
            if strict:
                raise ParseError(f"unknown node {n!r}", SourceSpan(no, 1, 0, 0))
            nodes.append(n)

    used: dict[tuple[str, str], int] = {}

    def claim(n: str, port: Optional[str], no: int) -> str:
        if port is None:
            k = 1
            while (n, str(k)) in used:
                k += 1
            port = str(k)
        if (n, port) in used:
            raise ParseError(f"endpoint {n} port {port} already used on line {used[(n, port)]}", SourceSpan(no, 1, 0, 0))
        used[(n, port)] = no
        return port

    links = []
    for no, u, up, v, vp, cost, cap, directed in raw_links:
        touch(u, no)
        touch(v, no)
        up = claim(u, up, no)
        vp = claim(v, vp, no)
        links.append(Link(u, up, v, vp, cost, cap))
        if not directed:
            links.append(Link(v, vp, u, up, cost, cap))
    qdecls = []
    for no, sw, name, cap in queues:
        touch(sw, no)
        if any(q.switch == sw and q.name == name for q in qdecls):
            raise ParseError(f"queue {name}@{sw} declared twice", SourceSpan(no, 1, 0, 0))
        qdecls.append(QueueDecl(sw, name, cap))
    return Topology(tuple(nodes), tuple(links), tuple(qdecls))


def parse_flows(text: str, topology=None):
    """Parse ``flow <src> <dst> rate=<w>`` records into a FlowSet."""
    from .netmodel import Flow, FlowSet

    flows = []
    for no, parts in _records(text):
        span = SourceSpan(no, 1, 0, 0)
        if parts[0] != "flow" or len(parts) != 4:
            raise ParseError("expected: flow <src> <dst> rate=<w>", span)
        k, v = _kv(parts[3], no)
        if k != "rate":
            raise ParseError(f"expected rate=<w>, found {parts[3]!r}", span)
        rate = _weight(v, no, "rate")
        if isinstance(rate, Infinity) or rate <= 0:
            raise ParseError("flow rate must be finite and positive", span)
        src, dst = parts[1], parts[2]
        if topology is not None:
            for n in (src, dst):
                if n not in topology.nodes:
                    raise ParseError(f"unknown endpoint {n!r}", span)
        f = Flow(src, dst, rate)
        if f in flows:
            raise ParseError(f"duplicate flow {src} -> {dst}", span)
        flows.append(f)
    return FlowSet(tuple(flows))


def parse_state(text: str, fields: Iterable[FieldId] = ()) -> dict[tuple[str, FieldId], object]:
    """Parse ``<switch> <field> <value>`` lines into switch-variable bindings."""
    known = {f.name: f for f in fields}
    out = {}
    for no, parts in _records(text):
        if len(parts) != 3:
            raise ParseError("expected: <switch> <field> <value>", SourceSpan(no, 1, 0, 0))
        sw, name, value = parts
        f = known.get(name)
        if f is None:
            quantitative = bool(re.fullmatch(r"\d+(\.\d+)?(/\d+)?|inf", value))
            f = FieldId(name, FieldKind.QUANTITATIVE if quantitative else FieldKind.SYMBOLIC, Scope.SWITCH)
        out[(sw, f)] = parse_weight(value) if f.quantitative else value
    return out

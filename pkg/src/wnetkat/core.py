"""Packets, histories, switch valuations, queue stores and the World state."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Union

from .algebra import Infinity, Weight, as_weight

#: Fresh symbol standing for "any value not mentioned by the program".
OTHER = "_"

#: Queue capacity used when a declaration gives none.
DEFAULT_QUEUE_CAPACITY = 64


class WNetKATError(Exception):
    """Base class for all library errors."""


class KindMismatch(WNetKATError):
    pass


class UndeclaredField(WNetKATError):
    pass


class UndefinedSwitchVariable(WNetKATError):
    pass


class FieldKind(enum.Enum):
    SYMBOLIC = "sym"
    QUANTITATIVE = "quant"


class Scope(enum.Enum):
    PACKET = "packet"
    SWITCH = "switch"


@dataclass(frozen=True, order=True)
class FieldId:
    name: str
    kind: FieldKind = FieldKind.SYMBOLIC
    scope: Scope = Scope.PACKET

    @property
    def quantitative(self) -> bool:
        return self.kind is FieldKind.QUANTITATIVE

    @property
    def is_switch(self) -> bool:
        return self.scope is Scope.SWITCH

    def __str__(self) -> str:
        return self.name


def sym(name: str) -> FieldId:
    return FieldId(name)


def quant(name: str) -> FieldId:
    return FieldId(name, FieldKind.QUANTITATIVE)


def switch_quant(name: str) -> FieldId:
    return FieldId(name, FieldKind.QUANTITATIVE, Scope.SWITCH)


def switch_sym(name: str) -> FieldId:
    return FieldId(name, FieldKind.SYMBOLIC, Scope.SWITCH)


#: The distinguished location fields.
SW = sym("sw")
PT = sym("pt")

# Symbols are plain strings, quantities are Weights.
Value = Union[str, Fraction, Infinity]


def check_value(f: FieldId, v: Value) -> Value:
    """Return ``v`` normalised for ``f``'s kind or raise :class:`KindMismatch`."""
    if f.quantitative:
        if isinstance(v, str):
            raise KindMismatch(f"symbol {v!r} written to quantitative field {f.name}")
        return as_weight(v)
    if not isinstance(v, str):
        raise KindMismatch(f"quantity {v!r} written to symbolic field {f.name}")
    return v


class FrozenMap(Mapping):
    """Small immutable hashable mapping."""

    __slots__ = ("_data", "_hash")

    def __init__(self, data: Mapping | Iterable = ()):
        self._data = dict(data)
        self._hash = None

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._data.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if isinstance(other, FrozenMap):
            return hash(self) == hash(other) and self._data == other._data
        return NotImplemented

    def set(self, key, value) -> "FrozenMap":
        data = dict(self._data)
        data[key] = value
        return type(self)(data)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self._data.items(), key=lambda kv: str(kv[0])))
        return f"{type(self).__name__}({inner})"


class Packet(FrozenMap):
    """Total assignment of the declared fields, keyed by field name."""

    __slots__ = ()

    def __repr__(self) -> str:
        from .algebra import format_weight

        parts = []
        for k in sorted(self._data):
            v = self._data[k]
            parts.append(f"{k}={v if isinstance(v, str) else format_weight(v)}")
        return "{" + ", ".join(parts) + "}"


# head first
History = tuple


class SwitchValuation(FrozenMap):
    """Partial map ``(switch, field name) -> value``."""

    __slots__ = ()


@dataclass(frozen=True)
class QueueStore:
    queues: FrozenMap = field(default_factory=FrozenMap)
    capacities: FrozenMap = field(default_factory=FrozenMap)

    @classmethod
    def declare(cls, decls: Iterable[tuple[str, str, int]]) -> "QueueStore":
        queues, caps = {}, {}
        for sw, name, cap in decls:
            if cap < 1:
                raise ValueError(f"queue {name}@{sw} needs a positive capacity")
            queues[(sw, name)] = ()
            caps[(sw, name)] = cap
        return cls(FrozenMap(queues), FrozenMap(caps))

    def contents(self, sw: str, q: str) -> tuple:
        try:
            return self.queues[(sw, q)]
        except KeyError:
            raise UndeclaredField(f"queue {q}@{sw} is not declared") from None

    def is_full(self, sw: str, q: str) -> bool:
        return len(self.contents(sw, q)) >= self.capacities[(sw, q)]

    def with_contents(self, sw: str, q: str, items: tuple) -> "QueueStore":
        return QueueStore(self.queues.set((sw, q), items), self.capacities)


@dataclass(frozen=True)
class World:
    rho: SwitchValuation
    history: tuple
    queues: QueueStore = field(default_factory=QueueStore)

    def __post_init__(self):
        if not self.history:
            raise ValueError("a history holds at least one packet")

    @property
    def head(self) -> Packet:
        return self.history[0]

    def with_head(self, pk: Packet) -> "World":
        return World(self.rho, (pk,) + self.history[1:], self.queues)

    def __hash__(self) -> int:
        h = self.__dict__.get("_h")
        if h is None:
            h = hash((self.rho, self.history, self.queues))
            object.__setattr__(self, "_h", h)
        return h


def make_packet(values: Mapping[FieldId, Value]) -> Packet:
    return Packet({f.name: check_value(f, v) for f, v in values.items()})


def make_world(
    packet: Mapping[FieldId, Value] | Packet,
    rho: Mapping[tuple[str, FieldId], Value] | SwitchValuation | None = None,
    queues: QueueStore | None = None,
) -> World:
    """Build a single-packet World."""
    pk = packet if isinstance(packet, Packet) else make_packet(packet)
    if rho is None:
        val = SwitchValuation()
    elif isinstance(rho, SwitchValuation):
        val = rho
    else:
        val = SwitchValuation({(sw, f.name): check_value(f, v) for (sw, f), v in rho.items()})
    return World(val, (pk,), queues or QueueStore())


def packet_read(w: World, f: FieldId) -> Optional[Value]:
    """Head-packet value of ``f``; ``None`` when ``f`` is not declared."""
    return w.head.get(f.name)


def packet_write(w: World, f: FieldId, v: Value) -> World:
    if f.name not in w.head:
        raise UndeclaredField(f"field {f.name} is not declared for this packet")
    return w.with_head(w.head.set(f.name, check_value(f, v)))


def current_switch(w: World) -> str:
    sw = w.head.get(SW.name)
    if not isinstance(sw, str):
        raise UndeclaredField("switch variables need the packet field 'sw'")
    return sw


def state_read(w: World, sw: str, f: FieldId) -> Optional[Value]:
    """``rho(sw, f)``, or ``None`` when undefined."""
    return w.rho.get((sw, f.name))


def state_write(w: World, sw: str, f: FieldId, v: Value) -> World:
    return World(w.rho.set((sw, f.name), check_value(f, v)), w.history, w.queues)


def enqueue(w: World, sw: str, q: str) -> Optional[World]:
    """Append the current history to ``q@sw``; ``None`` when the queue is full."""
    store = w.queues
    if store.is_full(sw, q):
        return None
    items = store.contents(sw, q) + (w.history,)
    return World(w.rho, w.history, store.with_contents(sw, q, items))


def dequeue(w: World, sw: str, q: str) -> World:
    """Remove the queue head if it is the current history, else pass through."""
    items = w.queues.contents(sw, q)
    if items and items[0] == w.history:
        return World(w.rho, w.history, w.queues.with_contents(sw, q, items[1:]))
    return w

"""Core vocabulary: object types and their partial order, natures, interaction
classes, object descriptors and the event interchange unit."""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

from .errors import Incompatible


class ObjectType(str, enum.Enum):
    OBJ_ANY = "obj_any"
    VAR = "var"
    OBJ_TEMP = "obj_temp"
    OBJ_PERM = "obj_perm"
    OBJ_BOOT = "obj_boot"
    OBJ_COM = "obj_com"
    THIS = "this"

    @classmethod
    def parse(cls, text: str) -> "ObjectType":
        return cls(text.strip().lower())


# Hasse diagram edges (lower, upper): specialization goes upwards.
HASSE_EDGES = (
    (ObjectType.OBJ_ANY, ObjectType.VAR),
    (ObjectType.OBJ_ANY, ObjectType.OBJ_TEMP),
    (ObjectType.OBJ_ANY, ObjectType.OBJ_PERM),
    (ObjectType.OBJ_ANY, ObjectType.OBJ_COM),
    (ObjectType.OBJ_PERM, ObjectType.OBJ_BOOT),
    (ObjectType.OBJ_PERM, ObjectType.THIS),
)


def _closure(edges):
    leq = {(t, t) for t in ObjectType}
    leq.update(edges)
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in itertools.product(list(leq), repeat=2):
            if b == c and (a, d) not in leq:
                leq.add((a, d))
                changed = True
    return frozenset(leq)


_LEQ = _closure(HASSE_EDGES)


def poset_leq(a: ObjectType, b: ObjectType) -> bool:
    """True iff ``a`` is below or equal to ``b`` (``b`` is at least as specialized)."""
    return (a, b) in _LEQ


def upper_bounds(a: ObjectType, b: ObjectType) -> list[ObjectType]:
    return [t for t in ObjectType if poset_leq(a, t) and poset_leq(b, t)]


def type_refine(current: ObjectType, observed: ObjectType) -> ObjectType:
    """Least upper bound of two types; raises Incompatible when none exists."""
    ubs = upper_bounds(current, observed)
    for t in ubs:
        if all(poset_leq(t, u) for u in ubs):
            return t
    raise Incompatible(current, observed)


def compatible(a: Optional[ObjectType], b: Optional[ObjectType]) -> bool:
    if a is None or b is None:
        return True
    return bool(upper_bounds(a, b))


class Nature(str, enum.Enum):
    FILE = "file"
    REGISTRY_KEY = "registry_key"
    SOCKET = "socket"
    MAIL = "mail"
    PROCESS = "process"
    VARIABLE = "variable"
    DRIVE = "drive"
    OTHER = "other"


class InteractionClass(str, enum.Enum):
    CREATE = "Create"
    OPEN = "Open"
    CLOSE = "Close"
    DELETE = "Delete"
    READ = "Read"
    WRITE = "Write"
    SIGNAL = "Signal"
    WAIT = "Wait"
    EXECUTE = "Execute"
    FORMAT = "FormatOp"
    BRANCH = "Branch"

    @classmethod
    def parse(cls, text: str) -> "InteractionClass":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValueError(f"unknown interaction class {text!r}")


# Classes whose events move data between objects.
VALUE_BEARING = frozenset({InteractionClass.READ, InteractionClass.WRITE, InteractionClass.FORMAT})


@dataclass(frozen=True)
class ObjectId:
    """Identity token of one object lifetime. Equality is token equality; the
    name only travels along for fact matching and reporting."""

    token: str
    name: Optional[str] = field(default=None, compare=False)

    def __str__(self):
        return self.token


@dataclass(frozen=True)
class Span:
    address: int
    size: int = 0

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("span size must be >= 0")


@dataclass(frozen=True)
class ObjectDescriptor:
    id: str
    nature: Nature
    otype: ObjectType
    name: Optional[str] = None
    span: Optional[Span] = None

    @property
    def ref(self) -> ObjectId:
        return ObjectId(self.id, self.name)

    def with_type(self, otype: ObjectType, nature: Optional[Nature] = None) -> "ObjectDescriptor":
        return replace(self, otype=otype, nature=nature or self.nature)

    def to_json(self) -> dict:
        d = {"id": self.id, "nature": self.nature.value, "type": self.otype.value}
        if self.name is not None:
            d["name"] = self.name
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ObjectDescriptor":
        return cls(
            id=str(d["id"]),
            nature=Nature(d.get("nature", "other")),
            otype=ObjectType(d.get("type", "obj_any")),
            name=d.get("name"),
        )


class IdAllocator:
    """Hands out run-unique object identity tokens."""

    def __init__(self, prefix: str = "o"):
        self._prefix = prefix
        self._counter = itertools.count(1)

    def __call__(self) -> str:
        return f"{self._prefix}{next(self._counter)}"


@dataclass(frozen=True)
class Event:
    """One abstracted interaction.

    For Read, Write and FormatOp the objects are ordered along the data flow:
    ``objects[0]`` is the source and ``objects[1]`` the destination.
    """

    seq: int
    cls: InteractionClass
    objects: tuple[ObjectDescriptor, ...] = ()
    loop: bool = False
    value: Optional[str] = None
    path: Optional[int] = None

    def obj(self, position: int) -> Optional[ObjectDescriptor]:
        if 0 <= position < len(self.objects):
            return self.objects[position]
        return None

    def mentions(self, token: str) -> bool:
        return any(o.id == token for o in self.objects)

    def same_action(self, other: "Event") -> bool:
        """Equality ignoring the sequence number (used by loop compression)."""
        return (
            self.cls == other.cls
            and self.objects == other.objects
            and self.loop == other.loop
            and self.value == other.value
        )

    def to_json(self) -> dict:
        d = {
            "seq": self.seq,
            "class": self.cls.value,
            "objects": [o.to_json() for o in self.objects],
            "loop": self.loop,
        }
        if self.value is not None:
            d["value"] = self.value
        if self.path is not None:
            d["path"] = self.path
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Event":
        return cls(
            seq=int(d["seq"]),
            cls=InteractionClass.parse(d["class"]),
            objects=tuple(ObjectDescriptor.from_json(o) for o in d.get("objects", [])),
            loop=bool(d.get("loop", False)),
            value=d.get("value"),
            path=d.get("path"),
        )


def dump_events(events: Iterable[Event]) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)


def load_events(text: str) -> Iterator[Event]:
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            yield Event.from_json(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"event line {lineno}: {exc}") from exc

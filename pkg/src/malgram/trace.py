"""System-call trace front-end.

Trace lines look like::

    12 NtCreateFile(H:0x1c, S:"C:\\\\x.exe", I:3) = SUCCESS

Tokens are ``H:0x<hex>`` (handle), ``A:0x<hex>[+<size>]`` (address with an
optional size), ``I:<dec>`` (integer) and ``S:"<escaped>"`` (string with
``\\\\``, ``\\"``, ``\\n``, ``\\t`` and ``\\xHH`` escapes). Lines starting with
``#`` are comments; ``# self: <path>`` declares the path of the traced program.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

from .apimap import ApiCatalog, map_call
from .classifier import AnalysisContext, ResourceConfig, canonical_path
from .errors import TraceSyntaxError
from .model import Event, InteractionClass, Nature, ObjectDescriptor, ObjectType

log = logging.getLogger(__name__)

SUCCESS_STATUSES = frozenset({"SUCCESS", "STATUS_SUCCESS"})


@dataclass(frozen=True)
class Handle:
    value: int

    def __str__(self):
        return f"H:{self.value:#x}"


@dataclass(frozen=True)
class Address:
    value: int
    size: Optional[int] = None

    def __str__(self):
        return f"A:{self.value:#x}" + (f"+{self.size}" if self.size is not None else "")


@dataclass(frozen=True)
class Int:
    value: int

    def __str__(self):
        return f"I:{self.value}"


@dataclass(frozen=True)
class Str:
    value: str

    def __str__(self):
        return 'S:"' + _escape(self.value) + '"'


Token = Union[Handle, Address, Int, Str]


@dataclass(frozen=True)
class RawCall:
    seq: int
    api: str
    args: tuple[Token, ...]
    status: str

    def __str__(self):
        return f"{self.seq} {self.api}({', '.join(map(str, self.args))}) = {self.status}"


_HEAD_RE = re.compile(r"\s*(\d+)\s+([A-Za-z_][\w.]*)\s*\(")
_TAIL_RE = re.compile(r"\)\s*=\s*([A-Za-z_][\w]*)\s*$")
_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch in ("\\", '"'):
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "".join(out)


def _read_string(line: str, i: int, lineno: int) -> tuple[str, int]:
    """Parse a quoted string starting at ``line[i] == '"'``; returns (value, next index)."""
    out = []
    i += 1
    while i < len(line):
        ch = line[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= len(line):
                break
            nxt = line[i + 1]
            if nxt in _ESCAPES:
                out.append(_ESCAPES[nxt])
                i += 2
                continue
            if nxt == "x" and re.fullmatch(r"[0-9a-fA-F]{2}", line[i + 2:i + 4]):
                out.append(chr(int(line[i + 2:i + 4], 16)))
                i += 4
                continue
            raise TraceSyntaxError(f"bad escape \\{nxt}", lineno, i + 1)
        out.append(ch)
        i += 1
    raise TraceSyntaxError("unterminated string", lineno, len(line) + 1)


_HANDLE_RE = re.compile(r"H:0x([0-9a-fA-F]+)")
_ADDR_RE = re.compile(r"A:0x([0-9a-fA-F]+)(?:\+(\d+))?")
_INT_RE = re.compile(r"I:(-?\d+)")


def parse_trace_line(line: str, lineno: int = 0) -> Optional[RawCall]:
    """Tokenize one line; None for blank and comment lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    m = _HEAD_RE.match(line)
    if not m:
        raise TraceSyntaxError("expected '<seq> <Api>('", lineno, 1)
    seq, api = int(m.group(1)), m.group(2)
    i = m.end()
    args: list[Token] = []
    expect_arg = True
    while True:
        while i < len(line) and line[i] in " \t":
            i += 1
        if i >= len(line):
            raise TraceSyntaxError("unterminated argument list", lineno, i + 1)
        if line[i] == ")":
            if args and expect_arg:
                raise TraceSyntaxError("argument expected after ','", lineno, i + 1)
            break
        if not expect_arg:
            if line[i] != ",":
                raise TraceSyntaxError("expected ',' or ')'", lineno, i + 1)
            i += 1
            expect_arg = True
            continue
        if line.startswith('S:"', i):
            value, i = _read_string(line, i + 2, lineno)
            args.append(Str(value))
        else:
            for regex, build in (
                (_HANDLE_RE, lambda g: Handle(int(g[0], 16))),
                (_ADDR_RE, lambda g: Address(int(g[0], 16), int(g[1]) if g[1] else None)),
                (_INT_RE, lambda g: Int(int(g[0]))),
            ):
                tm = regex.match(line, i)
                if tm and (tm.end() == len(line) or line[tm.end()] in " \t,)"):
                    args.append(build(tm.groups()))
                    i = tm.end()
                    break
            else:
                raise TraceSyntaxError(f"bad token at {line[i:i + 12]!r}", lineno, i + 1)
        expect_arg = False
    tail = _TAIL_RE.match(line, i)
    if not tail:
        col = line.find("=", i)
        raise TraceSyntaxError(
            "expected '= <STATUS>' after argument list" if col < 0 else "bad status",
            lineno,
            (col if col >= 0 else len(line)) + 1,
        )
    return RawCall(seq, api, tuple(args), tail.group(1))


@dataclass
class ParsedTrace:
    calls: list[RawCall] = field(default_factory=list)
    self_paths: list[str] = field(default_factory=list)


_SELF_RE = re.compile(r"^\s*#\s*self\s*:\s*(.+?)\s*$", re.I)


def parse_trace(text: str) -> ParsedTrace:
    out = ParsedTrace()
    last_seq = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _SELF_RE.match(line)
        if m:
            out.self_paths.append(m.group(1).strip('"'))
            continue
        call = parse_trace_line(line, lineno)
        if call is None:
            continue
        if last_seq is not None and call.seq <= last_seq:
            raise TraceSyntaxError(f"sequence number {call.seq} not increasing", lineno, 1)
        last_seq = call.seq
        out.calls.append(call)
    return out


class HandleTable:
    """Live handle → descriptor bindings."""

    def __init__(self):
        self.live: dict[int, ObjectDescriptor] = {}

    def bind(self, handle: int, desc: ObjectDescriptor) -> None:
        self.live[handle] = desc

    def resolve(self, handle: int) -> Optional[ObjectDescriptor]:
        return self.live.get(handle)

    def unbind(self, handle: int) -> Optional[ObjectDescriptor]:
        return self.live.pop(handle, None)

    def by_name(self, name: str) -> Optional[ObjectDescriptor]:
        for d in self.live.values():
            if d.name == name:
                return d
        return None

    def unbind_name(self, name: str) -> list[ObjectDescriptor]:
        gone = [h for h, d in self.live.items() if d.name == name]
        return [self.live.pop(h) for h in gone]


@dataclass(frozen=True)
class Diagnostic:
    seq: int
    kind: str
    message: str


class _Dangling(Exception):
    pass


class TraceAbstractor:
    def __init__(self, cfg: ResourceConfig, catalog: ApiCatalog, ctx: Optional[AnalysisContext] = None):
        self.cfg = cfg
        self.catalog = catalog
        self.ctx = ctx or AnalysisContext(cfg)
        self.handles = HandleTable()
        self.diagnostics: list[Diagnostic] = []

    def _object(self, token, role: str) -> ObjectDescriptor:
        if isinstance(token, Handle):
            desc = self.handles.resolve(token.value)
            if desc is None:
                raise _Dangling(token)
            return desc
        if isinstance(token, Address):
            return self.ctx.variable_at(token.value, token.size or 0)
        if isinstance(token, Str):
            return self._named(token.value)
        if isinstance(token, Int):
            return ObjectDescriptor(self.ctx.ids(), Nature.OTHER, ObjectType.OBJ_ANY, str(token.value))
        raise _Dangling(token)

    def _named(self, raw: str) -> ObjectDescriptor:
        # an object keeps its identity while some handle to it is open
        live = self.handles.by_name(canonical_path(raw) or raw)
        return live if live is not None else self.ctx.describe_string(raw)

    def abstract(self, call: RawCall) -> Optional[Event]:
        if call.status.upper() not in SUCCESS_STATUSES:
            return None
        mapped = map_call(call.api, call.args, self.catalog)
        if mapped is None:
            return None
        cls = mapped.cls
        entry = mapped.entry
        try:
            if cls in (InteractionClass.CREATE, InteractionClass.OPEN, InteractionClass.EXECUTE):
                name = mapped.role("name")
                if isinstance(name, Str):
                    desc = self._named(name.value)
                else:
                    desc = self._object(mapped.role("subject") or name, "subject")
                result = mapped.role("result-handle")
                if isinstance(result, Handle):
                    self.handles.bind(result.value, desc)
                objects = (desc,)
            elif cls == InteractionClass.CLOSE:
                token = mapped.role("subject")
                desc = self._object(token, "subject")
                self.handles.unbind(token.value)
                if desc in self.handles.live.values():
                    return None  # another handle keeps the object open
                objects = (desc,)
            elif cls == InteractionClass.DELETE:
                token = mapped.role("subject") or mapped.role("name")
                if isinstance(token, Str):
                    name = canonical_path(token.value)
                    killed = self.handles.unbind_name(name)
                    desc = killed[0] if killed else self.ctx.describe_string(token.value)
                else:
                    desc = self._object(token, "subject")
                    if desc.name:
                        self.handles.unbind_name(desc.name)
                objects = (desc,)
            elif cls in (InteractionClass.READ, InteractionClass.WRITE, InteractionClass.FORMAT):
                skey, srole = entry.source_role()
                tkey, trole = entry.target_role()
                src = self._object(mapped.role(srole), srole)
                dst = self._object(mapped.role(trole), trole)
                objects = (src, dst)
            else:
                token = mapped.role("subject")
                objects = (self._object(token, "subject"),) if token is not None else ()
        except _Dangling as exc:
            self.diagnostics.append(
                Diagnostic(call.seq, "DanglingHandle", f"{call.api}: unbound handle {exc.args[0]}")
            )
            log.warning("seq %d: %s references unbound handle %s", call.seq, call.api, exc.args[0])
            return None
        return Event(call.seq, cls, objects)

    def run(self, calls: Iterable[RawCall]) -> Iterator[Event]:
        for call in calls:
            ev = self.abstract(call)
            if ev is not None:
                yield ev


def abstract_trace(
    calls: Iterable[RawCall],
    cfg: ResourceConfig,
    catalog: ApiCatalog,
    ctx: Optional[AnalysisContext] = None,
    diagnostics: Optional[list] = None,
) -> list[Event]:
    ab = TraceAbstractor(cfg, catalog, ctx)
    events = list(ab.run(calls))
    if diagnostics is not None:
        diagnostics.extend(ab.diagnostics)
    return events


def _compress_once(events: list[Event]) -> list[Event]:
    out: list[Event] = []
    i, n = 0, len(events)
    while i < n:
        e = events[i]
        j = i + 1
        while j < n and events[j].same_action(e):
            j += 1
        if j - i >= 2:
            out.append(replace(e, loop=True))
            i = j
            continue
        if i + 3 < n:
            a, b = events[i], events[i + 1]
            j = i + 2
            while j + 1 < n and events[j].same_action(a) and events[j + 1].same_action(b):
                j += 2
            if j - i >= 4:
                out.extend((replace(a, loop=True), replace(b, loop=True)))
                i = j
                continue
        out.append(e)
        i += 1
    return out


def compress_loops(events: Iterable[Event]) -> list[Event]:
    """Collapse runs of a repeated event or event pair into loop-marked events.

    Applied until nothing changes, so the result is a fixed point.
    """
    current = list(events)
    while True:
        nxt = _compress_once(current)
        if nxt == current:
            return current
        current = nxt


def trace_to_events(
    text: str,
    cfg: ResourceConfig,
    catalog: ApiCatalog,
    compress: bool = True,
    diagnostics: Optional[list] = None,
) -> list[Event]:
    parsed = parse_trace(text)
    ctx = AnalysisContext(cfg)
    for p in parsed.self_paths:
        ctx.add_self(p)
    events = abstract_trace(parsed.calls, cfg, catalog, ctx, diagnostics)
    return compress_loops(events) if compress else events

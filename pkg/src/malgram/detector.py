"""Parallel LL(1) pushdown automata over the event stream.

Each behavior grammar is compiled to a table-driven automaton. An automaton
holds a set of in-flight derivations; every derivation is an immutable triple
(state, parse stack, semantic stack) plus the events it consumed. Events that a
derivation cannot use are ignored rather than treated as errors. When an event
may or may not belong to a behavior instance, the derivation is duplicated:
one copy consumes the event and the other keeps waiting.

Semantic attributes are evaluated during the parse: inherited attributes when
a nonterminal is expanded, terminal prerequisites when an event is matched,
and synthesized attributes when a production is reduced (eagerly, right after
its last symbol is matched). Synthesized attributes of the start symbol become
the verdict's bound objects and are published on a facts board that other
behaviors can query through ``fact(Behavior.attr)``.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .behaviors import BehaviorCatalog
from .grammar import (
    AttributeGrammar,
    Const,
    Disj,
    Fact,
    Ref,
    build_parse_table,
    expr_refs,
)
from .model import (
    VALUE_BEARING,
    Event,
    InteractionClass,
    Nature,
    ObjectDescriptor,
    ObjectId,
    ObjectType,
    poset_leq,
)

log = logging.getLogger(__name__)

Q0, Q1 = "q0", "q1"


# -- attribute values ---------------------------------------------------------


@dataclass(frozen=True)
class Published:
    """A value read from the facts board; matches by identity or by name."""

    value: ObjectId


@dataclass(frozen=True)
class Choice:
    options: tuple


def event_attr(event: Event, attr: str):
    if attr == "value":
        return event.value
    index = int(attr[3]) - 1
    obj = event.obj(index)
    if obj is None:
        return None
    kind = attr[4:]
    if kind == "":
        return obj
    if kind == "Id":
        return obj.ref
    if kind == "Tp":
        return obj.otype
    if kind == "Nat":
        return obj.nature
    raise KeyError(attr)


def _same_name(a: Optional[str], b: Optional[str]) -> bool:
    return a is not None and b is not None and a.casefold() == b.casefold()


def satisfies(actual, expected) -> bool:
    """Whether an event-provided value meets an expected attribute value."""
    if actual is None:
        return False
    if isinstance(expected, Choice):
        return any(satisfies(actual, o) for o in expected.options)
    if isinstance(expected, Published):
        fid = expected.value
        if isinstance(actual, ObjectDescriptor):
            return actual.id == fid.token or _same_name(actual.name, fid.name)
        if isinstance(actual, ObjectId):
            return actual.token == fid.token or _same_name(actual.name, fid.name)
        return False
    if isinstance(expected, ObjectType):
        if isinstance(actual, ObjectDescriptor):
            actual = actual.otype
        return isinstance(actual, ObjectType) and poset_leq(expected, actual)
    if isinstance(expected, Nature):
        if isinstance(actual, ObjectDescriptor):
            actual = actual.nature
        return actual == expected
    if isinstance(expected, ObjectDescriptor):
        expected = expected.ref
    if isinstance(expected, ObjectId):
        if isinstance(actual, ObjectDescriptor):
            actual = actual.ref
        return isinstance(actual, ObjectId) and actual.token == expected.token
    if isinstance(expected, str):
        if isinstance(actual, ObjectDescriptor):
            return _same_name(actual.name, expected)
        return actual == expected
    return actual == expected


# -- compiled grammar ---------------------------------------------------------


class Compiled:
    """Parse table plus per-position rule indexes for one grammar."""

    def __init__(self, g: AttributeGrammar):
        self.grammar = g
        self.name = g.name
        self.table = build_parse_table(g)
        self.entries: dict[str, list[tuple[str, int]]] = defaultdict(list)
        for (nt, term), p in self.table.items():
            self.entries[nt].append((term, p))
        self.rules_at: dict[tuple[int, int], list] = defaultdict(list)
        self.stored: dict[tuple[int, int], frozenset[str]] = {}
        for pi, prod in enumerate(g.productions):
            refs: dict[int, set[str]] = defaultdict(set)
            for r in prod.rules:
                self.rules_at[(pi, r.target.pos)].append(r)
                for ref in expr_refs(r.expr):
                    refs[ref.pos].add(ref.attr)
            for pos in range(0, len(prod.body) + 1):
                self.stored[(pi, pos)] = frozenset(refs.get(pos, ()))

    def lookahead(self, nt: str, event: Event) -> Optional[int]:
        for term, p in self.entries.get(nt, ()):
            if self.grammar.terminals[term].matches(event):
                return p
        return None


# -- derivations ----------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    prod: int
    parent_pos: Optional[int]  # None: the bottom frame collects the result
    pos: int = 0
    values: tuple = ()  # sorted ((pos, attr), value) pairs

    def get(self, pos: int, attr: str):
        for key, v in self.values:
            if key == (pos, attr):
                return v
        return None

    def bind(self, items: dict) -> "Frame":
        if not items:
            return self
        merged = dict(self.values)
        merged.update(items)
        return replace(self, values=tuple(sorted(merged.items(), key=lambda kv: kv[0])))


@dataclass(frozen=True)
class Derivation:
    state: str
    parse: tuple  # symbols (str) and reduce markers (int production index); bottom excluded
    sem: tuple[Frame, ...]
    consumed: tuple[Event, ...] = ()
    path: tuple[str, ...] = ()
    result: tuple = ()

    def key(self):
        return (self.state, self.parse, self.sem, self.path)


@dataclass(frozen=True)
class Verdict:
    behavior: str
    variant: str
    events: tuple[int, ...]
    objects: tuple[tuple[str, ObjectId], ...]

    def key(self):
        return (self.behavior, self.variant, tuple((a, o.token) for a, o in self.objects))

    def to_json(self) -> dict:
        return {
            "behavior": self.behavior,
            "variant": self.variant,
            "events": list(self.events),
            "objects": [
                {"role": a, "id": o.token, **({"name": o.name} if o.name is not None else {})}
                for a, o in self.objects
            ],
        }


class Facts:
    """Append-only board of values synthesized by completed behaviors."""

    def __init__(self):
        self._values: dict[tuple[str, str], list[ObjectId]] = defaultdict(list)
        self._pending: list[tuple[tuple[str, str], ObjectId]] = []

    def get(self, behavior: str, attr: str) -> tuple[ObjectId, ...]:
        return tuple(self._values.get((behavior, attr), ()))

    def stage(self, behavior: str, attr: str, value) -> None:
        self._pending.append(((behavior, attr), value))

    def publish(self) -> None:
        for key, value in self._pending:
            if value not in self._values[key]:
                self._values[key].append(value)
        self._pending.clear()


class _Reject(Exception):
    pass


class Automaton:
    def __init__(self, compiled: Compiled, stats: "Metrics"):
        self.c = compiled
        self.g = compiled.grammar
        self.stats = stats
        self.derivations: list[Derivation] = [Derivation(Q0, (self.g.start,), ())]

    # expression evaluation inside a frame
    def _eval(self, expr, frame: Frame, facts: Facts):
        if isinstance(expr, Ref):
            return frame.get(expr.pos, expr.attr)
        if isinstance(expr, Const):
            return expr.value
        if isinstance(expr, Fact):
            return Choice(tuple(Published(v) for v in facts.get(expr.behavior, expr.attr)))
        if isinstance(expr, Disj):
            return Choice(tuple(self._eval(o, frame, facts) for o in expr.options))
        raise TypeError(expr)

    def _expand(self, frame: Frame, prod: int, facts: Facts) -> Frame:
        inherited = {}
        for r in self.c.rules_at.get((frame.prod, frame.pos), ()):
            inherited[(0, r.target.attr)] = self._eval(r.expr, frame, facts)
        keep = {k: v for k, v in inherited.items() if k[1] in self.c.stored[(prod, 0)]}
        return Frame(prod, frame.pos).bind(keep)

    def ll_parse(self, d: Derivation, event: Event, facts: Facts):
        """Try to consume ``event``. Returns (new derivation, binds_new) or None."""
        parse = list(d.parse)
        sem = list(d.sem)
        result = d.result
        if d.state == Q0:
            sem = []
        top = parse[-1]
        max_parse = len(parse)
        # expand nonterminals on the lookahead
        while isinstance(top, str) and not self.g.is_terminal(top):
            p = self.c.lookahead(top, event)
            if p is None:
                return None
            parse.pop()
            if sem:
                parent = sem[-1]
                parent = replace(parent, pos=parent.pos + 1)
                sem[-1] = parent
                child = self._expand(parent, p, facts)
            else:
                child = Frame(p, None)
            sem.append(child)
            parse.append(p)
            parse.extend(reversed(self.g.productions[p].body))
            max_parse = max(max_parse, len(parse))
            top = parse[-1]
        if not isinstance(top, str):
            return None
        pattern = self.g.terminals[top]
        if not pattern.matches(event):
            return None
        frame = sem[-1]
        frame = replace(frame, pos=frame.pos + 1)
        for r in self.c.rules_at.get((frame.prod, frame.pos), ()):
            expected = self._eval(r.expr, frame, facts)
            if not satisfies(event_attr(event, r.target.attr), expected):
                return None
        stored = self.c.stored[(frame.prod, frame.pos)]
        frame = frame.bind({(frame.pos, a): event_attr(event, a) for a in stored})
        sem[-1] = frame
        parse.pop()
        self.stats.max_sem_stack = max(self.stats.max_sem_stack, len(sem))
        self.stats.max_parse_stack = max(self.stats.max_parse_stack, max_parse)
        # eager reductions
        while parse and isinstance(parse[-1], int):
            parse.pop()
            done = sem.pop()
            syn = {}
            for r in self.c.rules_at.get((done.prod, 0), ()):
                syn[r.target.attr] = self._eval(r.expr, done, facts)
            if done.parent_pos is None:
                result = tuple(syn.items())
            else:
                parent = sem[-1]
                need = self.c.stored[(parent.prod, done.parent_pos)]
                sem[-1] = parent.bind(
                    {(done.parent_pos, a): v for a, v in syn.items() if a in need}
                )
        new = Derivation(
            Q1,
            tuple(parse),
            tuple(sem),
            d.consumed + (event,),
            d.path + (top + "*" if event.loop else top,),
            result,
        )
        return new, bool(stored)

    def is_complete(self, d: Derivation) -> bool:
        return d.state == Q1 and not d.parse

    def variant_of(self, d: Derivation) -> str:
        return self.g.variant_label(d.path)

    def feed(self, event: Event, facts: Facts, dedup: bool) -> list[Verdict]:
        verdicts: list[Verdict] = []
        survivors: list[Derivation] = []
        for d in self.derivations:
            self.stats.parse_calls += 1
            outcome = self.ll_parse(d, event, facts)
            if outcome is None:
                survivors.append(d)
                continue
            new, binds = outcome
            if d.state == Q0:
                survivors.append(d)
            elif binds or event.cls in VALUE_BEARING or event.value is not None:
                survivors.append(d)
                self.stats.n_ambiguities += 1
            if self.is_complete(new):
                objects = tuple((a, v) for a, v in new.result if isinstance(v, ObjectId))
                verdicts.append(
                    Verdict(
                        self.g.name,
                        self.variant_of(new),
                        tuple(e.seq for e in new.consumed),
                        objects,
                    )
                )
                for a, v in objects:
                    facts.stage(self.g.name, a, v)
            else:
                survivors.append(new)
        if dedup:
            seen = set()
            unique = []
            for d in survivors:
                k = d.key()
                if k not in seen:
                    seen.add(k)
                    unique.append(d)
            survivors = unique
        self.derivations = survivors
        return verdicts

    def prune(self, token: str) -> int:
        """Drop derivations that can no longer complete once ``token`` is closed."""
        kept = []
        dropped = 0
        for d in self.derivations:
            if d.state != Q0 and self._opened_only(d, token) and self._awaits(d, token):
                dropped += 1
                continue
            kept.append(d)
        self.derivations = kept
        return dropped

    @staticmethod
    def _opened_only(d: Derivation, token: str) -> bool:
        last = None
        for e in d.consumed:
            if e.mentions(token):
                last = e
        return last is not None and last.cls in (InteractionClass.OPEN, InteractionClass.CREATE)

    def _awaits(self, d: Derivation, token: str) -> bool:
        for frame in d.sem:
            held = {k for k, v in frame.values if _token_of(v) == token}
            if not held:
                continue
            prod = self.g.productions[frame.prod]
            for r in prod.rules:
                if r.target.pos > frame.pos and isinstance(r.expr, Ref):
                    if (r.expr.pos, r.expr.attr) in held:
                        return True
        return False


def _token_of(v) -> Optional[str]:
    if isinstance(v, ObjectId):
        return v.token
    if isinstance(v, ObjectDescriptor):
        return v.id
    return None


# -- engine -------------------------------------------------------------------


@dataclass
class Metrics:
    n_events: int = 0
    n_ambiguities: int = 0
    max_derivations: int = 0
    parse_calls: int = 0
    max_parse_stack: int = 0
    max_sem_stack: int = 0

    @property
    def alpha(self) -> float:
        return self.n_ambiguities / max(self.n_events, 1)

    def to_json(self) -> dict:
        return {
            "n_events": self.n_events,
            "n_ambiguities": self.n_ambiguities,
            "alpha": round(self.alpha, 6),
            "max_derivations": self.max_derivations,
            "parse_calls": self.parse_calls,
            "max_parse_stack": self.max_parse_stack,
            "max_sem_stack": self.max_sem_stack,
        }

    def merge(self, other: "Metrics") -> None:
        self.n_events += other.n_events
        self.n_ambiguities += other.n_ambiguities
        self.parse_calls += other.parse_calls
        self.max_derivations = max(self.max_derivations, other.max_derivations)
        self.max_parse_stack = max(self.max_parse_stack, other.max_parse_stack)
        self.max_sem_stack = max(self.max_sem_stack, other.max_sem_stack)


@dataclass
class DetectionReport:
    verdicts: list[Verdict] = field(default_factory=list)
    metrics: Metrics = field(default_factory=Metrics)
    alpha_threshold: Optional[float] = None

    @property
    def alpha_alert(self) -> bool:
        return self.alpha_threshold is not None and self.metrics.alpha > self.alpha_threshold

    def verdict_keys(self) -> set:
        return {v.key() for v in self.verdicts}

    def to_json(self) -> dict:
        metrics = self.metrics.to_json()
        if self.alpha_threshold is not None:
            metrics["alpha_threshold"] = self.alpha_threshold
            metrics["alpha_alert"] = self.alpha_alert
        return {"verdicts": [v.to_json() for v in self.verdicts], "metrics": metrics}


class Engine:
    """Runs one automaton per behavior over a single event stream."""

    def __init__(
        self,
        catalog: BehaviorCatalog | Iterable[AttributeGrammar],
        dedup: bool = True,
        prune: bool = True,
    ):
        self.metrics = Metrics()
        self.facts = Facts()
        self.dedup = dedup
        self.prune = prune
        self.automata = [Automaton(Compiled(g), self.metrics) for g in catalog]
        self.verdicts: list[Verdict] = []
        self._keys: set = set()

    def feed(self, event: Event) -> list[Verdict]:
        self.metrics.n_events += 1
        fresh: list[Verdict] = []
        for a in self.automata:
            for v in a.feed(event, self.facts, self.dedup):
                if v.key() not in self._keys:
                    self._keys.add(v.key())
                    fresh.append(v)
        self.facts.publish()
        if self.prune and event.cls in (InteractionClass.CLOSE, InteractionClass.DELETE):
            for obj in event.objects:
                for a in self.automata:
                    a.prune(obj.id)
        total = sum(len(a.derivations) for a in self.automata)
        self.metrics.max_derivations = max(self.metrics.max_derivations, total)
        self.verdicts.extend(fresh)
        return fresh

    def run(self, events: Iterable[Event]) -> list[Verdict]:
        for e in events:
            self.feed(e)
        return self.verdicts


def detect(
    events: Iterable[Event],
    catalog: BehaviorCatalog | Iterable[AttributeGrammar],
    dedup: bool = True,
    prune: bool = True,
    alpha_threshold: Optional[float] = None,
) -> DetectionReport:
    """Detect behaviors in a stream. Events tagged with distinct exploration
    paths are analyzed as separate streams (untagged events belong to every
    path) and the verdicts are united."""
    events = list(events)
    grammars = list(catalog)
    paths = sorted({e.path for e in events if e.path is not None})
    streams = [events] if not paths else [
        [e for e in events if e.path is None or e.path == p] for p in paths
    ]
    report = DetectionReport(alpha_threshold=alpha_threshold)
    keys = set()
    for stream in streams:
        engine = Engine(grammars, dedup=dedup, prune=prune)
        for v in engine.run(stream):
            if v.key() not in keys:
                keys.add(v.key())
                report.verdicts.append(v)
        report.metrics.merge(engine.metrics)
    if report.alpha_alert:
        log.warning("ambiguity ratio %.3f above threshold %.3f", report.metrics.alpha, alpha_threshold)
    return report

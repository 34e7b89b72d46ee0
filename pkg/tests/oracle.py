"""Brute-force reference detector.

Enumerates every sentence of each (finite) behavior grammar, tries every
increasing subsequence of the stream against it and evaluates the semantic
rules on the resulting derivation tree. Shares nothing with the detector but
the grammar data structures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from malgram.grammar import Const, Disj, Fact, Ref, sentences
from malgram.model import ObjectDescriptor, ObjectType

_UP = {
    "obj_any": {"obj_any"},
    "var": {"obj_any", "var"},
    "obj_temp": {"obj_any", "obj_temp"},
    "obj_perm": {"obj_any", "obj_perm"},
    "obj_com": {"obj_any", "obj_com"},
    "obj_boot": {"obj_any", "obj_perm", "obj_boot"},
    "this": {"obj_any", "obj_perm", "this"},
}


def below(required: ObjectType, actual: ObjectType) -> bool:
    return required.value in _UP[actual.value]


def pattern_ok(pat, ev) -> bool:
    if ev.cls != pat.cls:
        return False
    if pat.loop is not None and pat.loop != ev.loop:
        return False
    if pat.value is not None and pat.value != ev.value:
        return False
    for i, t in enumerate(pat.types):
        if t is None:
            continue
        if i >= len(ev.objects) or not below(t, ev.objects[i].otype):
            return False
    return True


@dataclass
class Node:
    symbol: str
    prod: int | None = None
    children: list = field(default_factory=list)
    leaf: int | None = None  # index into the matched subsequence


def build_tree(g, symbol, prods, counter):
    if g.is_terminal(symbol):
        node = Node(symbol, leaf=counter[0])
        counter[0] += 1
        return node
    idx = prods.pop(0)
    node = Node(symbol, idx)
    for sym in g.productions[idx].body:
        node.children.append(build_tree(g, sym, prods, counter))
    return node


@dataclass(frozen=True)
class Facts:
    """Duplication-style facts: (behavior, attr) -> [(completion index, descriptor)]."""

    table: dict

    def visible(self, behavior, attr, before):
        return [d for i, d in self.table.get((behavior, attr), []) if i < before]


def _terminal_value(ev, attr):
    if attr == "value":
        return ev.value
    attr = {"obj": "obj1", "objId": "obj1Id", "objTp": "obj1Tp"}.get(attr, attr)
    n = int(attr[3]) - 1
    if n >= len(ev.objects):
        return None
    obj = ev.objects[n]
    kind = attr[4:]
    if kind == "Tp":
        return obj.otype
    if kind == "Nat":
        return obj.nature
    return obj  # identity and whole-object attributes both compare by descriptor


def _accepts(actual, expected) -> bool:
    if actual is None or expected is None:
        return False
    kind, payload = expected
    if kind == "any":
        return any(_accepts(actual, o) for o in payload)
    if kind == "fact":
        return any(
            actual.id == d.id or (actual.name and d.name and actual.name.casefold() == d.name.casefold())
            for d in payload
        )
    if kind == "type":
        t = actual.otype if isinstance(actual, ObjectDescriptor) else actual
        return isinstance(t, ObjectType) and below(payload, t)
    if kind == "obj":
        return isinstance(actual, ObjectDescriptor) and actual.id == payload.id
    if isinstance(actual, ObjectDescriptor):
        return actual.name is not None and actual.name.casefold() == str(payload.value if hasattr(payload, "value") else payload).casefold()
    return actual == getattr(payload, "value", payload)


class _Eval:
    def __init__(self, g, tree, events, facts):
        self.g, self.events, self.facts = g, events, facts
        self.attrs = {}  # (id(node), attr) -> tagged value
        self.checks = []  # (leaf node, attr, expr, owner node)
        self.defs = []  # (target node, attr, expr, owner node)
        self._collect(tree)
        self.root = tree

    def _collect(self, node):
        if node.prod is None:
            return
        for rule in self.g.productions[node.prod].rules:
            target = node if rule.target.pos == 0 else node.children[rule.target.pos - 1]
            if target.prod is None and target.leaf is not None:
                self.checks.append((target, rule.target.attr, rule.expr, node))
            else:
                self.defs.append((target, rule.target.attr, rule.expr, node))
        for c in node.children:
            self._collect(c)

    def value(self, expr, owner, when):
        """Tagged value of ``expr`` inside ``owner``; None when not yet known."""
        if isinstance(expr, Ref):
            tgt = owner if expr.pos == 0 else owner.children[expr.pos - 1]
            if tgt.prod is None:
                v = _terminal_value(self.events[tgt.leaf], expr.attr)
                if v is None:
                    return None
                return ("obj", v) if isinstance(v, ObjectDescriptor) else ("lit", v)
            return self.attrs.get((id(tgt), expr.attr))
        if isinstance(expr, Const):
            return ("type", expr.value) if isinstance(expr.value, ObjectType) else ("lit", expr.value)
        if isinstance(expr, Fact):
            return ("fact", self.facts.visible(expr.behavior, expr.attr, when))
        if isinstance(expr, Disj):
            opts = [self.value(o, owner, when) for o in expr.options]
            return None if any(o is None for o in opts) else ("any", opts)
        raise TypeError(expr)

    def run(self):
        pending = list(self.defs)
        while pending:
            rest = []
            for target, attr, expr, owner in pending:
                v = self.value(expr, owner, when=10**9)
                if v is None:
                    rest.append((target, attr, expr, owner))
                else:
                    self.attrs[(id(target), attr)] = v
            if len(rest) == len(pending):
                return None
            pending = rest
        for leaf, attr, expr, owner in self.checks:
            actual = _terminal_value(self.events[leaf.leaf], attr)
            expected = self.value(expr, owner, when=self.events[leaf.leaf].seq_index)
            if not _accepts(actual, expected):
                return None
        out = []
        for rule in self.g.productions[self.root.prod].rules:
            if rule.target.pos == 0:
                v = self.attrs.get((id(self.root), rule.target.attr))
                if v is not None and v[0] == "obj":
                    out.append((rule.target.attr, v[1]))
        return out


@dataclass(frozen=True)
class _Indexed:
    """An event together with its position in the stream."""

    ev: object
    seq_index: int

    def __getattr__(self, name):
        return getattr(self.ev, name)


def _subsequences(g, seq, stream, start=0, chosen=()):
    if len(chosen) == len(seq):
        yield chosen
        return
    pat = g.terminals[seq[len(chosen)]]
    for i in range(start, len(stream)):
        if pattern_ok(pat, stream[i]):
            yield from _subsequences(g, seq, stream, i + 1, chosen + (i,))


def grammar_verdicts(g, stream, facts):
    """All (variant, objects, completion index) accepted for one grammar."""
    found = []
    for seq, prods in sentences(g):
        for idx in _subsequences(g, seq, stream):
            picked = [_Indexed(stream[i], i) for i in idx]
            tree = build_tree(g, g.start, list(prods), [0])
            bound = _Eval(g, tree, picked, facts).run()
            if bound is None:
                continue
            path = tuple(s + ("*" if stream[i].loop else "") for s, i in zip(seq, idx))
            found.append((g.variant_label(path), tuple(bound), idx[-1]))
    return found


def oracle(stream, grammars):
    """Verdict keys (behavior, variant, sorted((attr, token))) for a stream."""
    grammars = list(grammars)
    providers = [g for g in grammars if not any(_uses_facts(g))]
    consumers = [g for g in grammars if g not in providers]
    table: dict = {}
    keys = set()
    for g in providers + consumers:
        for variant, bound, last in grammar_verdicts(g, stream, Facts(table)):
            keys.add((g.name, variant, tuple(sorted((a, d.id) for a, d in bound))))
            if g in providers:
                for a, d in bound:
                    table.setdefault((g.name, a), []).append((last, d))
    return keys


def _uses_facts(g):
    for p in g.productions:
        for r in p.rules:
            stack = [r.expr]
            while stack:
                e = stack.pop()
                if isinstance(e, Fact):
                    yield True
                elif isinstance(e, Disj):
                    stack.extend(e.options)


def detector_keys(report):
    return {(v.behavior, v.variant, tuple(sorted((a, o.token) for a, o in v.objects))) for v in report.verdicts}

"""Attribute grammars over interaction-class terminals.

A grammar is a CFG whose terminals are *refined* event patterns (interaction
class plus required object types, loop mark and value), decorated with
semantic rules. Rules targeting a terminal attribute are prerequisites checked
against the event; rules targeting nonterminal attributes compute inherited or
synthesized values. Only L-attributed LL(1) grammars are accepted, which is
what lets the detector parse and evaluate in one pass.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import ConflictError
from .model import (
    Event,
    InteractionClass,
    Nature,
    ObjectType,
    compatible,
    poset_leq,
    type_refine,  # noqa: F401  (re-exported)
)

# Attributes carried by every terminal occurrence; values come from the event.
TERMINAL_ATTRS = (
    "obj1", "obj1Id", "obj1Tp", "obj1Nat",
    "obj2", "obj2Id", "obj2Tp", "obj2Nat",
    "value",
)
TERMINAL_ALIASES = {"obj": "obj1", "objId": "obj1Id", "objTp": "obj1Tp", "objNat": "obj1Nat"}


def canonical_terminal_attr(name: str) -> str:
    return TERMINAL_ALIASES.get(name, name)


@dataclass(frozen=True)
class TerminalPattern:
    """Event pattern used as a refined LL(1) lookahead symbol.

    ``types[i]`` is the least type object ``i`` must have (None = anything,
    including a missing object).
    """

    cls: InteractionClass
    types: tuple[Optional[ObjectType], ...] = ()
    loop: Optional[bool] = None
    value: Optional[str] = None

    def matches(self, event: Event) -> bool:
        if event.cls != self.cls:
            return False
        if self.loop is not None and event.loop != self.loop:
            return False
        if self.value is not None and event.value != self.value:
            return False
        for i, required in enumerate(self.types):
            if required is None:
                continue
            obj = event.obj(i)
            if obj is None or not poset_leq(required, obj.otype):
                return False
        return True

    def overlaps(self, other: "TerminalPattern") -> bool:
        """True when some event could match both patterns."""
        if self.cls != other.cls:
            return False
        if self.loop is not None and other.loop is not None and self.loop != other.loop:
            return False
        if self.value is not None and other.value is not None and self.value != other.value:
            return False
        n = max(len(self.types), len(other.types))
        for i in range(n):
            a = self.types[i] if i < len(self.types) else None
            b = other.types[i] if i < len(other.types) else None
            if not compatible(a, b):
                return False
        return True

    def describe(self) -> str:
        args = ", ".join(t.value if t else "_" for t in self.types)
        text = f"{self.cls.value}({args})"
        if self.loop is True:
            text += " loop"
        elif self.loop is False:
            text += " noloop"
        if self.value is not None:
            text += f' value "{self.value}"'
        return text


# -- semantic rule expressions ---------------------------------------------


@dataclass(frozen=True)
class Ref:
    """Attribute of the symbol at ``pos`` (0 = production head)."""

    pos: int
    attr: str


@dataclass(frozen=True)
class Const:
    value: Union[ObjectType, Nature, str]


@dataclass(frozen=True)
class Fact:
    behavior: str
    attr: str


@dataclass(frozen=True)
class Disj:
    options: tuple["Expr", ...]


Expr = Union[Ref, Const, Fact, Disj]


def expr_refs(expr: Expr) -> list[Ref]:
    if isinstance(expr, Ref):
        return [expr]
    if isinstance(expr, Disj):
        return [r for o in expr.options for r in expr_refs(o)]
    return []


def expr_facts(expr: Expr) -> list[Fact]:
    if isinstance(expr, Fact):
        return [expr]
    if isinstance(expr, Disj):
        return [f for o in expr.options for f in expr_facts(o)]
    return []


@dataclass(frozen=True)
class SemanticRule:
    target: Ref
    expr: Expr


@dataclass(frozen=True)
class Production:
    head: str
    body: tuple[str, ...]
    rules: tuple[SemanticRule, ...] = ()


@dataclass
class AttributeGrammar:
    name: str
    start: str
    terminals: dict[str, TerminalPattern]
    productions: list[Production]
    variants: dict[tuple[str, ...], str] = field(default_factory=dict)

    def variant_label(self, path: tuple[str, ...]) -> str:
        """Label of a consumed terminal path; ``name*`` marks a loop-marked event.

        A path with loop marks falls back to the label of its unmarked form.
        """
        if path in self.variants:
            return self.variants[path]
        plain = tuple(t.rstrip("*") for t in path)
        return self.variants.get(plain, "-".join(plain))

    @property
    def nonterminals(self) -> list[str]:
        seen: list[str] = []
        for p in self.productions:
            if p.head not in seen:
                seen.append(p.head)
        return seen

    def is_terminal(self, symbol: str) -> bool:
        return symbol in self.terminals

    def alternatives(self, head: str) -> list[int]:
        return [i for i, p in enumerate(self.productions) if p.head == head]

    def symbol_at(self, prod: Production, pos: int) -> str:
        return prod.head if pos == 0 else prod.body[pos - 1]

    def attribute_kinds(self) -> dict[str, dict[str, str]]:
        """Infer synthesized ('syn') / inherited ('inh') attributes per nonterminal.

        An attribute targeted on a production head is synthesized; targeted on
        a body occurrence it is inherited. Conflicts are reported by
        ``ll1_check``; here the first classification wins.
        """
        kinds: dict[str, dict[str, str]] = defaultdict(dict)
        for p in self.productions:
            for r in p.rules:
                sym = self.symbol_at(p, r.target.pos)
                if self.is_terminal(sym):
                    continue
                kind = "syn" if r.target.pos == 0 else "inh"
                kinds[sym].setdefault(r.target.attr, kind)
        for nt in self.nonterminals:
            kinds.setdefault(nt, {})
        return dict(kinds)

    def synthesized(self, nt: str) -> list[str]:
        """Synthesized attributes of ``nt`` in order of first definition."""
        out: list[str] = []
        for p in self.productions:
            if p.head != nt:
                continue
            for r in p.rules:
                if r.target.pos == 0 and r.target.attr not in out:
                    out.append(r.target.attr)
        return out


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


# -- variable partition -----------------------------------------------------


def _symbol_attrs(g: AttributeGrammar, sym: str, kinds) -> set[str]:
    if g.is_terminal(sym):
        return set(TERMINAL_ATTRS)
    return set(kinds.get(sym, {}))


def partition_variables(g: AttributeGrammar, p: Production) -> tuple[set[Ref], set[Ref]]:
    """Split the production's attribute occurrences into inner and outer ones."""
    kinds = g.attribute_kinds()
    targeted = {r.target for r in p.rules}
    var: set[Ref] = set()
    inner: set[Ref] = set()
    for pos in range(len(p.body) + 1):
        sym = g.symbol_at(p, pos)
        for attr in _symbol_attrs(g, sym, kinds):
            ref = Ref(pos, attr)
            var.add(ref)
            if pos == 0:
                if kinds.get(sym, {}).get(attr) == "syn":
                    inner.add(ref)
            elif g.is_terminal(sym):
                if ref in targeted:
                    inner.add(ref)
            elif kinds.get(sym, {}).get(attr) == "inh":
                inner.add(ref)
    return inner, var - inner


# -- FIRST sets, validation, parse table -----------------------------------


def first_sets(g: AttributeGrammar) -> dict[str, set[str]]:
    first: dict[str, set[str]] = {nt: set() for nt in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for p in g.productions:
            if not p.body:
                continue
            lead = p.body[0]
            new = {lead} if g.is_terminal(lead) else first.get(lead, set())
            if not new <= first[p.head]:
                first[p.head] |= new
                changed = True
    return first


def first_of_production(g: AttributeGrammar, p: Production, first=None) -> set[str]:
    first = first if first is not None else first_sets(g)
    lead = p.body[0]
    return {lead} if g.is_terminal(lead) else set(first.get(lead, set()))


def _conflicts(g: AttributeGrammar, first) -> list[Finding]:
    out = []
    for nt in g.nonterminals:
        alts = g.alternatives(nt)
        for i, a in enumerate(alts):
            for b in alts[i + 1:]:
                fa = first_of_production(g, g.productions[a], first)
                fb = first_of_production(g, g.productions[b], first)
                for ta in sorted(fa):
                    for tb in sorted(fb):
                        if g.terminals[ta].overlaps(g.terminals[tb]):
                            out.append(Finding(
                                "first-first",
                                f"{nt}: alternatives {a} and {b} both start with "
                                f"{g.terminals[ta].describe()} / {g.terminals[tb].describe()}",
                            ))
    return out


def ll1_check(g: AttributeGrammar) -> list[Finding]:
    """Report everything preventing single-pass parsing with attribute evaluation."""
    findings: list[Finding] = []
    nts = set(g.nonterminals)
    if g.start not in nts:
        findings.append(Finding("structure", f"start symbol {g.start} has no production"))
    for p in g.productions:
        if not p.body:
            findings.append(Finding("structure", f"{p.head}: empty production"))
        for sym in p.body:
            if sym not in nts and not g.is_terminal(sym):
                findings.append(Finding("structure", f"{p.head}: unknown symbol {sym}"))
    if findings:
        return findings

    first = first_sets(g)
    for nt in g.nonterminals:
        if not first[nt]:
            findings.append(Finding("structure", f"{nt} derives no terminal string"))
    findings += _conflicts(g, first)

    # attribute kinds must be consistent
    seen_kind: dict[tuple[str, str], str] = {}
    for p in g.productions:
        for r in p.rules:
            sym = g.symbol_at(p, r.target.pos)
            if g.is_terminal(sym):
                if r.target.pos == 0:
                    findings.append(Finding("structure", f"terminal {sym} used as head"))
                if r.target.attr not in TERMINAL_ATTRS:
                    findings.append(Finding("undefined", f"{sym}.{r.target.attr} is not a terminal attribute"))
                continue
            kind = "syn" if r.target.pos == 0 else "inh"
            prev = seen_kind.setdefault((sym, r.target.attr), kind)
            if prev != kind:
                findings.append(Finding(
                    "attribute-kind", f"{sym}.{r.target.attr} is both synthesized and inherited"))
    kinds = g.attribute_kinds()
    if kinds.get(g.start, {}) and any(k == "inh" for k in kinds[g.start].values()):
        findings.append(Finding("structure", f"start symbol {g.start} has inherited attributes"))

    for idx, p in enumerate(g.productions):
        inner, outer = partition_variables(g, p)
        counts: dict[Ref, int] = defaultdict(int)
        for r in p.rules:
            counts[r.target] += 1
        for ref, n in counts.items():
            if n > 1:
                sym = g.symbol_at(p, ref.pos)
                findings.append(Finding(
                    "rule-count", f"production {idx} ({p.head}): {n} rules for {sym}.{ref.attr}"))
        # every nonterminal inner variable needs exactly one rule
        for ref in inner:
            sym = g.symbol_at(p, ref.pos)
            if not g.is_terminal(sym) and counts.get(ref, 0) == 0:
                findings.append(Finding(
                    "rule-count", f"production {idx} ({p.head}): no rule for {sym}.{ref.attr}"))
        for r in p.rules:
            for ref in expr_refs(r.expr):
                sym = g.symbol_at(p, ref.pos) if ref.pos <= len(p.body) else "?"
                if ref not in outer:
                    findings.append(Finding(
                        "undefined" if ref not in inner else "inner-reference",
                        f"production {idx} ({p.head}): {sym}.{ref.attr} is not an outer variable",
                    ))
                if r.target.pos != 0 and ref.pos != 0 and ref.pos >= r.target.pos:
                    tsym = g.symbol_at(p, r.target.pos)
                    findings.append(Finding(
                        "l-attributed",
                        f"production {idx} ({p.head}): {tsym}.{r.target.attr} depends on "
                        f"{sym}.{ref.attr} at or right of its position",
                    ))
    return findings


def build_parse_table(g: AttributeGrammar) -> dict[tuple[str, str], int]:
    """LL(1) table keyed by (nonterminal, terminal name) -> production index."""
    first = first_sets(g)
    conflicts = _conflicts(g, first)
    if conflicts:
        raise ConflictError("; ".join(str(c) for c in conflicts))
    table: dict[tuple[str, str], int] = {}
    for idx, p in enumerate(g.productions):
        if not p.body:
            raise ConflictError(f"{p.head}: empty production")
        for t in first_of_production(g, p, first):
            key = (p.head, t)
            if key in table and table[key] != idx:
                raise ConflictError(f"two entries for {key}")
            table[key] = idx
    return table


def sentences(g: AttributeGrammar, symbol: Optional[str] = None, limit: int = 10000):
    """Enumerate (terminal sequence, production indices) derivable from ``symbol``.

    Only meaningful for non-recursive grammars; raises ValueError past ``limit``.
    """
    symbol = symbol or g.start
    out: list[tuple[tuple[str, ...], tuple[int, ...]]] = []

    def expand(stack: tuple[str, ...], done: tuple[str, ...], prods: tuple[int, ...], depth: int):
        if depth > 64 or len(out) > limit:
            raise ValueError("grammar language is not finite enough to enumerate")
        if not stack:
            out.append((done, prods))
            return
        head, rest = stack[0], stack[1:]
        if g.is_terminal(head):
            expand(rest, done + (head,), prods, depth)
            return
        for idx in g.alternatives(head):
            expand(g.productions[idx].body + rest, done, prods + (idx,), depth + 1)

    expand((symbol,), (), (), 0)
    return out

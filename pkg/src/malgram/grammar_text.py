"""Line-oriented behavior-definition format.

::

    # comment
    behavior Duplication
    start Duplicate                      # optional, defaults to first rule head
    terminal open  = Open(this)
    terminal lread = Read(this, var) loop
    terminal bthen = Branch(_) value "then:absent"
    rule Duplicate ::= create open Body | open Rest
    sem <Duplicate>.srcId = <open>.obj1Id
    sem <copy>.obj1 = this | fact(Duplication.targId)
    variant create-open-read-write = create open read write
    variant open-create-interleaved = open create read* write*

A trailing ``*`` in a variant sequence stands for a loop-marked occurrence of
the terminal. A ``sem`` line applies to every alternative of the preceding ``rule`` line
that contains all the symbols it mentions. ``<Sym[k]>`` selects the k-th body
occurrence of ``Sym``; a bare ``<Head>`` is the production head.
"""

from __future__ import annotations

import re
from typing import Optional

from .errors import GrammarParseError
from .grammar import (
    TERMINAL_ATTRS,
    AttributeGrammar,
    Const,
    Disj,
    Expr,
    Fact,
    Production,
    Ref,
    SemanticRule,
    TerminalPattern,
    canonical_terminal_attr,
)
from .model import InteractionClass, Nature, ObjectType

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_TERMINAL_RE = re.compile(
    rf"^terminal\s+({_IDENT})\s*=\s*({_IDENT})\s*\(([^)]*)\)\s*(.*)$"
)
_REF_RE = re.compile(rf"<\s*({_IDENT})\s*(?:\[\s*(\d+)\s*\])?\s*>\s*\.\s*({_IDENT})")
_FACT_RE = re.compile(rf"fact\(\s*({_IDENT})\s*\.\s*({_IDENT})\s*\)")


class _RawRef:
    __slots__ = ("symbol", "index", "attr", "column")

    def __init__(self, symbol, index, attr, column):
        self.symbol, self.index, self.attr, self.column = symbol, index, attr, column


def _split_top(text: str, sep: str) -> list[tuple[str, int]]:
    """Split on ``sep`` outside double quotes, keeping start columns."""
    parts, buf, start, quoted = [], [], 0, False
    for i, ch in enumerate(text):
        if ch == '"':
            quoted = not quoted
        if ch == sep and not quoted:
            parts.append(("".join(buf), start))
            buf, start = [], i + 1
            continue
        buf.append(ch)
    parts.append(("".join(buf), start))
    return parts


def _parse_term(text: str, line: int, col: int):
    s = text.strip()
    col += len(text) - len(text.lstrip())
    if not s:
        raise GrammarParseError("empty expression", line, col)
    m = _REF_RE.fullmatch(s)
    if m:
        return _RawRef(m.group(1), int(m.group(2)) if m.group(2) else None, m.group(3), col)
    m = _FACT_RE.fullmatch(s)
    if m:
        return Fact(m.group(1), m.group(2))
    if len(s) >= 2 and s[0] == s[-1] == '"':
        return Const(s[1:-1].replace('\\"', '"'))
    try:
        return Const(ObjectType.parse(s))
    except ValueError:
        pass
    try:
        return Const(Nature(s.lower()))
    except ValueError:
        pass
    raise GrammarParseError(f"cannot parse expression {s!r}", line, col)


def _parse_expr(text: str, line: int, col: int):
    parts = _split_top(text, "|")
    terms = [_parse_term(p, line, col + c) for p, c in parts]
    return terms[0] if len(terms) == 1 else ("disj", terms)


def _resolve(raw, prod: Production, g_terminals: dict) -> Optional[Ref]:
    """Resolve a raw symbol reference inside one alternative (None if absent)."""
    if raw.symbol == prod.head and raw.index is None:
        return Ref(0, raw.attr)
    k = raw.index or 1
    seen = 0
    for pos, sym in enumerate(prod.body, 1):
        if sym == raw.symbol:
            seen += 1
            if seen == k:
                attr = canonical_terminal_attr(raw.attr) if sym in g_terminals else raw.attr
                return Ref(pos, attr)
    return None


def _resolve_expr(expr, prod, terminals):
    if isinstance(expr, _RawRef):
        return _resolve(expr, prod, terminals)
    if isinstance(expr, tuple):
        options = []
        for t in expr[1]:
            r = _resolve_expr(t, prod, terminals)
            if r is None:
                return None
            options.append(r)
        return Disj(tuple(options))
    return expr


def _parse_pattern(cls_text, args_text, tail, line) -> TerminalPattern:
    try:
        cls = InteractionClass.parse(cls_text)
    except ValueError as exc:
        raise GrammarParseError(str(exc), line, 0) from None
    types = []
    for arg in [a.strip() for a in args_text.split(",")] if args_text.strip() else []:
        if arg in ("_", "*", ""):
            types.append(None)
            continue
        try:
            types.append(ObjectType.parse(arg))
        except ValueError:
            raise GrammarParseError(f"unknown object type {arg!r}", line, 0) from None
    while types and types[-1] is None:
        types.pop()
    loop, value = None, None
    rest = tail.strip()
    while rest:
        if rest.startswith("noloop"):
            loop, rest = False, rest[6:].strip()
        elif rest.startswith("loop"):
            loop, rest = True, rest[4:].strip()
        else:
            m = re.match(r'value\s+"((?:[^"\\]|\\.)*)"', rest)
            if not m:
                raise GrammarParseError(f"unexpected {rest!r} in terminal", line, 0)
            value, rest = m.group(1), rest[m.end():].strip()
    return TerminalPattern(cls, tuple(types), loop, value)


def parse_grammar(text: str) -> AttributeGrammar:
    """Parse the text format without validating LL(1)/L-attributed properties."""
    name = None
    start = None
    terminals: dict[str, TerminalPattern] = {}
    groups: list[tuple[int, str, list[tuple[str, ...]], list]] = []  # line, head, alts, sems
    variants: list[tuple[int, str, tuple[str, ...]]] = []

    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].rstrip() if '"' not in raw_line else _strip_comment(raw_line)
        if not line.strip():
            continue
        stripped = line.strip()
        keyword = stripped.split(None, 1)[0]
        col = len(line) - len(line.lstrip()) + 1
        if keyword == "behavior":
            parts = stripped.split()
            if len(parts) != 2:
                raise GrammarParseError("expected 'behavior <Name>'", lineno, col)
            if name is not None:
                raise GrammarParseError("second behavior declaration", lineno, col)
            name = parts[1]
        elif keyword == "start":
            parts = stripped.split()
            if len(parts) != 2:
                raise GrammarParseError("expected 'start <Nonterminal>'", lineno, col)
            start = parts[1]
        elif keyword == "terminal":
            m = _TERMINAL_RE.match(stripped)
            if not m:
                raise GrammarParseError("expected 'terminal <name> = <Class>(<types>)'", lineno, col)
            tname = m.group(1)
            if tname in terminals:
                raise GrammarParseError(f"terminal {tname} declared twice", lineno, col)
            terminals[tname] = _parse_pattern(m.group(2), m.group(3), m.group(4), lineno)
        elif keyword == "rule":
            body = stripped[len("rule"):]
            if "::=" not in body:
                raise GrammarParseError("expected '::=' in rule", lineno, col)
            head, rhs = body.split("::=", 1)
            head = head.strip()
            if not re.fullmatch(_IDENT, head):
                raise GrammarParseError(f"bad rule head {head!r}", lineno, col)
            alts = []
            for alt, acol in _split_top(rhs, "|"):
                syms = tuple(alt.split())
                if not syms:
                    raise GrammarParseError("empty alternative", lineno, col + acol)
                for s in syms:
                    if not re.fullmatch(_IDENT, s):
                        raise GrammarParseError(f"bad symbol {s!r}", lineno, col + acol)
                alts.append(syms)
            groups.append((lineno, head, alts, []))
        elif keyword == "sem":
            if not groups:
                raise GrammarParseError("'sem' before any 'rule'", lineno, col)
            body = stripped[len("sem"):]
            if "=" not in body:
                raise GrammarParseError("expected '=' in sem", lineno, col)
            lhs, rhs = body.split("=", 1)
            target = _parse_term(lhs, lineno, col + 3)
            if not isinstance(target, _RawRef):
                raise GrammarParseError("sem target must be an attribute reference", lineno, col)
            expr = _parse_expr(rhs, lineno, col + 4 + len(lhs))
            groups[-1][3].append((lineno, target, expr))
        elif keyword == "variant":
            m = re.match(r'variant\s+("(?:[^"]*)"|\S+)\s*=\s*(.+)$', stripped)
            if not m:
                raise GrammarParseError("expected 'variant <label> = <terminals>'", lineno, col)
            label = m.group(1).strip('"')
            variants.append((lineno, label, tuple(m.group(2).split())))
        else:
            raise GrammarParseError(f"unknown keyword {keyword!r}", lineno, col)

    if not groups:
        raise GrammarParseError("no rules: grammar has no start symbol", 1, 1)
    if name is None:
        raise GrammarParseError("missing 'behavior <Name>' line", 1, 1)

    productions: list[Production] = []
    for lineno, head, alts, sems in groups:
        prods = [Production(head, alt) for alt in alts]
        rules: list[list[SemanticRule]] = [[] for _ in prods]
        for slineno, target, expr in sems:
            applied = False
            for i, p in enumerate(prods):
                tref = _resolve(target, p, terminals)
                if tref is None:
                    continue
                rexpr = _resolve_expr(expr, p, terminals)
                if rexpr is None:
                    continue
                rules[i].append(SemanticRule(tref, rexpr))
                applied = True
            if not applied:
                raise GrammarParseError(
                    "sem mentions symbols absent from every alternative of the preceding rule",
                    slineno, target.column,
                )
        for p, rs in zip(prods, rules):
            productions.append(Production(p.head, p.body, tuple(rs)))

    vmap: dict[tuple[str, ...], str] = {}
    for lineno, label, seq in variants:
        for t in seq:
            if t.rstrip("*") not in terminals:
                raise GrammarParseError(f"variant uses unknown terminal {t}", lineno, 1)
        vmap[seq] = label
    return AttributeGrammar(
        name=name,
        start=start or groups[0][1],
        terminals=terminals,
        productions=productions,
        variants=vmap,
    )


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i].rstrip()
    return line.rstrip()


# -- serialization ----------------------------------------------------------


def _ref_text(g: AttributeGrammar, p: Production, ref: Ref) -> str:
    if ref.pos == 0:
        return f"<{p.head}>.{ref.attr}"
    sym = p.body[ref.pos - 1]
    k = sum(1 for s in p.body[: ref.pos] if s == sym)
    if k == 1 and sym != p.head:
        return f"<{sym}>.{ref.attr}"
    return f"<{sym}[{k}]>.{ref.attr}"


def _expr_text(g, p, expr: Expr) -> str:
    if isinstance(expr, Ref):
        return _ref_text(g, p, expr)
    if isinstance(expr, Fact):
        return f"fact({expr.behavior}.{expr.attr})"
    if isinstance(expr, Disj):
        return " | ".join(_expr_text(g, p, o) for o in expr.options)
    v = expr.value
    if isinstance(v, (ObjectType, Nature)):
        return v.value
    return '"' + str(v).replace('"', '\\"') + '"'


def dump_grammar(g: AttributeGrammar) -> str:
    lines = [f"behavior {g.name}", f"start {g.start}"]
    for name, pat in g.terminals.items():
        lines.append(f"terminal {name} = {pat.describe()}")
    for p in g.productions:
        lines.append(f"rule {p.head} ::= {' '.join(p.body)}")
        for r in p.rules:
            lines.append(f"sem {_ref_text(g, p, r.target)} = {_expr_text(g, p, r.expr)}")
    for seq, label in g.variants.items():
        shown = f'"{label}"' if " " in label else label
        lines.append(f"variant {shown} = {' '.join(seq)}")
    return "\n".join(lines) + "\n"


__all__ = ["parse_grammar", "dump_grammar", "TERMINAL_ATTRS"]

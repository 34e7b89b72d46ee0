"""Static scan: declarations, managers and local procedures of a script."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .lexer import IDENT, tokenize
from .normalize import COMMENT_TAG, DECLARATION, Line
from .parser import (
    Assign,
    Call,
    Expr,
    If,
    Lit,
    Loop,
    Member,
    Name,
    Procedure,
    Select,
    Stmt,
    parse_program,
)

MANAGER_CLASSES = {
    "scripting.filesystemobject": "file",
    "wscript.shell": "shell",
    "wscript.network": "network",
    "outlook.application": "mail",
    "cdo.message": "mailitem",
    "mapi.session": "mail",
}


def manager_kind(class_name: str) -> Optional[str]:
    return MANAGER_CLASSES.get(class_name.strip().lower())


def creation_class(expr: Expr) -> Optional[str]:
    """Class-name constant of a ``CreateObject``/``GetObject`` call, if any."""
    if not isinstance(expr, Call) or not expr.args or not isinstance(expr.args[0], Lit):
        return None
    f = expr.func
    name = f.id if isinstance(f, Name) else f.name if isinstance(f, Member) else None
    if name is None or name.lower() not in ("createobject", "getobject"):
        return None
    value = expr.args[0].value
    return value if isinstance(value, str) else None


@dataclass
class ScriptStructure:
    variables: set[str] = field(default_factory=set)
    constants: dict[str, Expr] = field(default_factory=dict)
    managers: dict[str, str] = field(default_factory=dict)
    functions: dict[str, Procedure] = field(default_factory=dict)
    normalized_lines: list[Line] = field(default_factory=list)
    program: list[Stmt] = field(default_factory=list)


def _walk(stmts: list[Stmt]) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, If):
            for _, body in s.branches:
                yield from _walk(body)
            yield from _walk(s.orelse)
        elif isinstance(s, Select):
            for _, body in s.cases:
                yield from _walk(body)
            yield from _walk(s.orelse)
        elif isinstance(s, Loop):
            yield from _walk(s.body)


def _declared_names(line: Line) -> list[str]:
    toks = tokenize(line.text, line.lineno, keep_ws=False)
    names = []
    depth = 0
    expect_name = True
    for t in toks[1:]:
        if t.kind == "(":
            depth += 1
        elif t.kind == ")":
            depth -= 1
        elif depth == 0 and t.kind == ",":
            expect_name = True
        elif depth == 0 and t.kind == IDENT and expect_name:
            if t.text.lower() in ("dim", "const", "preserve"):
                continue
            names.append(t.text)
            expect_name = False
    return names


def static_scan(lines: list[Line]) -> ScriptStructure:
    program, procedures = parse_program(lines)
    st = ScriptStructure(normalized_lines=list(lines), program=program, functions=procedures)
    for line in lines:
        if line.tag == COMMENT_TAG:
            continue
        if line.tag == DECLARATION and "const" not in line.text.lower().split()[:2]:
            st.variables.update(n.lower() for n in _declared_names(line))
    bodies = [program] + [p.body for p in procedures.values()]
    for body in bodies:
        for s in _walk(body):
            if not isinstance(s, Assign) or not isinstance(s.target, Name):
                continue
            cls = creation_class(s.value)
            if cls is not None and manager_kind(cls):
                st.managers[s.target.key] = manager_kind(cls)
    decl_lines = {ln.lineno for ln in lines if ln.tag == DECLARATION}
    for s in program:
        if isinstance(s, Assign) and isinstance(s.target, Name) and s.line in decl_lines:
            st.constants[s.target.key] = s.value
    return st

"""Tokenizer for the mini-script language (one logical line at a time)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..errors import ScriptSyntaxError

STR, NUM, IDENT, OP, LPAR, RPAR, COMMA, DOT, WS, COMMENT, COLON = (
    "str", "num", "ident", "op", "(", ")", ",", ".", "ws", "comment", ":",
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    value: object = None


_NUM_RE = re.compile(r"&[Hh][0-9A-Fa-f]+&?|&[Oo][0-7]+&?|\d+\.\d*|\.\d+|\d+")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPS = ("<>", "<=", ">=", "&", "+", "-", "*", "/", "\\", "^", "=", "<", ">")


def _num_value(text: str):
    t = text.rstrip("&")
    if t[:2].lower() == "&h":
        return int(t[2:], 16)
    if t[:2].lower() == "&o":
        return int(t[2:], 8)
    if "." in t:
        return float(t)
    return int(t)


def tokenize(line: str, lineno: int = 0, keep_ws: bool = True) -> list[Tok]:
    toks: list[Tok] = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            j = i
            while j < n and line[j] in " \t":
                j += 1
            if keep_ws:
                toks.append(Tok(WS, line[i:j]))
            i = j
        elif ch == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ScriptSyntaxError("unterminated string literal", lineno)
                if line[j] == '"':
                    if j + 1 < n and line[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(line[j])
                j += 1
            toks.append(Tok(STR, line[i:j + 1], "".join(buf)))
            i = j + 1
        elif ch == "'":
            toks.append(Tok(COMMENT, line[i:]))
            i = n
        elif ch == "&" and _NUM_RE.match(line, i) and not _after_value(toks):
            m = _NUM_RE.match(line, i)
            toks.append(Tok(NUM, m.group(0), _num_value(m.group(0))))
            i = m.end()
        elif ch.isdigit() or (ch == "." and i + 1 < n and line[i + 1].isdigit() and not _after_value(toks)):
            m = _NUM_RE.match(line, i)
            toks.append(Tok(NUM, m.group(0), _num_value(m.group(0))))
            i = m.end()
        elif ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(line, i)
            toks.append(Tok(IDENT, m.group(0)))
            i = m.end()
        elif ch == "[":
            j = line.find("]", i)
            if j < 0:
                raise ScriptSyntaxError("unterminated bracketed name", lineno)
            toks.append(Tok(IDENT, line[i:j + 1]))
            i = j + 1
        elif ch == "(":
            toks.append(Tok(LPAR, ch))
            i += 1
        elif ch == ")":
            toks.append(Tok(RPAR, ch))
            i += 1
        elif ch == ",":
            toks.append(Tok(COMMA, ch))
            i += 1
        elif ch == ".":
            toks.append(Tok(DOT, ch))
            i += 1
        elif ch == ":":
            toks.append(Tok(COLON, ch))
            i += 1
        else:
            for op in _OPS:
                if line.startswith(op, i):
                    toks.append(Tok(OP, op))
                    i += len(op)
                    break
            else:
                raise ScriptSyntaxError(f"unexpected character {ch!r}", lineno)
    return toks


def _after_value(toks: list[Tok]) -> bool:
    """Whether the previous significant token ends an operand."""
    for t in reversed(toks):
        if t.kind == WS:
            continue
        return t.kind in (STR, NUM, IDENT, RPAR)
    return False


def untokenize(toks: list[Tok]) -> str:
    return "".join(t.text for t in toks)


def quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def first_word(toks: list[Tok]) -> Optional[str]:
    for t in toks:
        if t.kind == WS:
            continue
        return t.text.lower() if t.kind == IDENT else None
    return None

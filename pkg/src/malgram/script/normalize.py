"""Code normalization: undo syntactic shortcuts and literal-level obfuscation.

Steps, per logical line: join ``_`` continuations, tag comments, expand
single-line ``If``, split ``:``-joined statements, decode ``Chr(n)`` literals,
fold adjacent string concatenations, expand ``With`` blocks and tag ``Dim`` /
``Const`` declarations. The output is a fixed point: normalizing the joined
output again yields the same lines.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ScriptSyntaxError
from .lexer import (
    COLON,
    COMMA,
    COMMENT,
    DOT,
    IDENT,
    LPAR,
    NUM,
    OP,
    RPAR,
    STR,
    WS,
    Tok,
    first_word,
    quote,
    tokenize,
    untokenize,
)

CODE, DECLARATION, COMMENT_TAG = "code", "declaration", "comment"

# Operators binding tighter than '&'; folding next to them would regroup operands.
_TIGHT_OPS = frozenset({"+", "-", "*", "/", "\\", "^"})
_TIGHT_WORDS = frozenset({"mod"})


@dataclass(frozen=True)
class Line:
    text: str
    tag: str
    lineno: int


def _logical_lines(script: str):
    buf, start = [], None
    for lineno, raw in enumerate(script.split("\n"), 1):
        raw = raw.rstrip("\r")
        if start is None:
            start = lineno
        stripped = raw.rstrip()
        if stripped.endswith(" _") or stripped == "_":
            buf.append(stripped[:-1])
            continue
        buf.append(raw)
        yield start, " ".join(b.strip() for b in buf) if len(buf) > 1 else buf[0]
        buf, start = [], None
    if buf:
        yield start, " ".join(b.strip() for b in buf)


def _sig(toks: list[Tok], i: int, step: int):
    j = i + step
    while 0 <= j < len(toks) and toks[j].kind == WS:
        j += step
    return j if 0 <= j < len(toks) else None


def decode_chr(toks: list[Tok]) -> list[Tok]:
    out: list[Tok] = []
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == IDENT and t.text.lower() in ("chr", "chrw", "chr$", "chrb"):
            j = _sig(toks, i, 1)
            if j is not None and toks[j].kind == LPAR:
                k = _sig(toks, j, 1)
                if k is not None and toks[k].kind == NUM and isinstance(toks[k].value, int):
                    r = _sig(toks, k, 1)
                    code = toks[k].value
                    if r is not None and toks[r].kind == RPAR and 32 <= code < 0x110000 and code != 127:
                        ch = chr(code)
                        out.append(Tok(STR, quote(ch), ch))
                        i = r + 1
                        continue
        out.append(t)
        i += 1
    return out


def _tight(tok: Tok) -> bool:
    return (tok.kind == OP and tok.text in _TIGHT_OPS) or (
        tok.kind == IDENT and tok.text.lower() in _TIGHT_WORDS
    )


def fold_concat(toks: list[Tok]) -> list[Tok]:
    changed = True
    toks = list(toks)
    while changed:
        changed = False
        for i, t in enumerate(toks):
            if t.kind != STR:
                continue
            amp = _sig(toks, i, 1)
            if amp is None or toks[amp].kind != OP or toks[amp].text != "&":
                continue
            nxt = _sig(toks, amp, 1)
            if nxt is None or toks[nxt].kind != STR:
                continue
            before = _sig(toks, i, -1)
            after = _sig(toks, nxt, 1)
            if before is not None and _tight(toks[before]):
                continue
            if after is not None and _tight(toks[after]):
                continue
            value = t.value + toks[nxt].value
            toks[i:nxt + 1] = [Tok(STR, quote(value), value)]
            changed = True
            break
    return toks


def _split_top(toks: list[Tok], kind: str) -> list[list[Tok]]:
    parts, cur = [], []
    for t in toks:
        if t.kind == kind:
            parts.append(cur)
            cur = []
        else:
            cur.append(t)
    parts.append(cur)
    return parts


def _strip(toks: list[Tok]) -> list[Tok]:
    a, b = 0, len(toks)
    while a < b and toks[a].kind == WS:
        a += 1
    while b > a and toks[b - 1].kind == WS:
        b -= 1
    return toks[a:b]


def _find_word(toks: list[Tok], word: str, start: int = 0):
    depth = 0
    for i in range(start, len(toks)):
        t = toks[i]
        if t.kind == LPAR:
            depth += 1
        elif t.kind == RPAR:
            depth -= 1
        elif depth == 0 and t.kind == IDENT and t.text.lower() == word:
            return i
    return None


def _expand_with(toks: list[Tok], subject: list[Tok]) -> list[Tok]:
    out: list[Tok] = []
    for i, t in enumerate(toks):
        if t.kind == DOT:
            prev = _sig(toks, i, -1)
            leading = prev is None or toks[prev].kind in (OP, LPAR, COMMA) or (
                toks[prev].kind == IDENT and toks[prev].text.lower() in _KEYWORDS_BEFORE_EXPR
            )
            glued = prev is not None and prev == i - 1 and toks[prev].kind in (IDENT, RPAR)
            if leading and not glued:
                out.extend(subject)
        out.append(t)
    return out


_KEYWORDS_BEFORE_EXPR = frozenset(
    {"set", "call", "if", "then", "else", "elseif", "while", "until", "not", "and", "or",
     "xor", "to", "in", "execute", "executeglobal", "return", "step", "case"}
)


def _declaration(toks: list[Tok]) -> bool:
    w = first_word(toks)
    if w in ("dim", "const", "redim"):
        return True
    if w in ("public", "private"):
        sig = [t for t in toks if t.kind != WS]
        return len(sig) > 1 and sig[1].text.lower() not in ("sub", "function", "property")
    return False


class _Normalizer:
    def __init__(self):
        self.lines: list[Line] = []
        self.with_stack: list[list[Tok]] = []

    def emit(self, toks: list[Tok], lineno: int) -> None:
        toks = _strip(toks)
        if not toks:
            return
        w = first_word(toks)
        if w == "with":
            subject = _strip(toks[1:])
            if self.with_stack:
                subject = _expand_with(subject, self.with_stack[-1])
            self.with_stack.append(subject)
            return
        if w == "end":
            sig = [t for t in toks if t.kind != WS]
            if len(sig) >= 2 and sig[1].kind == IDENT and sig[1].text.lower() == "with":
                if not self.with_stack:
                    raise ScriptSyntaxError("'End With' without 'With'", lineno)
                self.with_stack.pop()
                return
        if self.with_stack:
            toks = _expand_with(toks, self.with_stack[-1])
        toks = fold_concat(decode_chr(toks))
        tag = DECLARATION if _declaration(toks) else CODE
        self.lines.append(Line(untokenize(toks), tag, lineno))

    def statement(self, toks: list[Tok], lineno: int) -> None:
        toks = _strip(toks)
        if not toks:
            return
        if first_word(toks) == "if":
            then = _find_word(toks, "then")
            if then is not None:
                rest = _strip(toks[then + 1:])
                if rest:
                    self.emit(toks[: then + 1], lineno)
                    els = _find_word(rest, "else")
                    then_part = rest if els is None else rest[:els]
                    for seg in _split_top(then_part, COLON):
                        self.statement(seg, lineno)
                    if els is not None:
                        self.emit([Tok(IDENT, "Else")], lineno)
                        for seg in _split_top(rest[els + 1:], COLON):
                            self.statement(seg, lineno)
                    self.emit([Tok(IDENT, "End"), Tok(WS, " "), Tok(IDENT, "If")], lineno)
                    return
        self.emit(toks, lineno)

    def logical(self, text: str, lineno: int) -> None:
        toks = tokenize(text, lineno)
        comment = None
        if toks and toks[-1].kind == COMMENT:
            comment = toks.pop()
        if first_word(toks) == "rem":
            self.lines.append(Line(text.strip(), COMMENT_TAG, lineno))
            return
        if not _strip(toks):
            if comment is not None:
                self.lines.append(Line(comment.text.strip(), COMMENT_TAG, lineno))
            return
        if first_word(toks) == "if" and _find_word(toks, "then") is not None:
            self.statement(toks, lineno)
            return
        for seg in _split_top(toks, COLON):
            self.statement(seg, lineno)


def normalize(script: str) -> list[Line]:
    norm = _Normalizer()
    for lineno, text in _logical_lines(script):
        norm.logical(text, lineno)
    if norm.with_stack:
        raise ScriptSyntaxError("'With' block not closed", len(script.split("\n")))
    return norm.lines


def normalize_text(script: str) -> str:
    return "\n".join(line.text for line in normalize(script))

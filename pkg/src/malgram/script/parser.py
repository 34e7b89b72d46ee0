"""Parser for normalized mini-script lines into a statement tree."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import ScriptSyntaxError
from .lexer import COMMA, DOT, IDENT, LPAR, NUM, OP, RPAR, STR, Tok, tokenize
from .normalize import CODE, DECLARATION, Line

# -- expressions ----------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Union[str, int, float, bool, None]


@dataclass(frozen=True)
class Name:
    id: str

    @property
    def key(self) -> str:
        return self.id.lower()


@dataclass(frozen=True)
class Member:
    obj: "Expr"
    name: str


@dataclass(frozen=True)
class Call:
    func: "Expr"
    args: tuple["Expr", ...] = ()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


Expr = Union[Lit, Name, Member, Call, BinOp, Unary]

# -- statements -----------------------------------------------------------------


@dataclass
class Stmt:
    line: int = field(default=0, kw_only=True)


@dataclass
class Assign(Stmt):
    target: Expr
    value: Expr
    is_set: bool = False


@dataclass
class ExprStmt(Stmt):
    expr: Expr


@dataclass
class If(Stmt):
    branches: list[tuple[Expr, list[Stmt]]]
    orelse: list[Stmt]


@dataclass
class Select(Stmt):
    subject: Expr
    cases: list[tuple[tuple[Expr, ...], list[Stmt]]]
    orelse: list[Stmt]


@dataclass
class Loop(Stmt):
    kind: str  # while, do, for, foreach
    body: list[Stmt]
    cond: Optional[Expr] = None
    var: Optional[str] = None
    start: Optional[Expr] = None
    stop: Optional[Expr] = None
    step: Optional[Expr] = None
    post_cond: Optional[Expr] = None


@dataclass
class Execute(Stmt):
    expr: Expr


@dataclass
class Exit(Stmt):
    what: str


@dataclass
class Nop(Stmt):
    pass


@dataclass
class Procedure:
    name: str
    params: tuple[str, ...]
    is_function: bool
    body: list[Stmt]
    span: tuple[int, int]

    @property
    def key(self) -> str:
        return self.name.lower()


# -- expression parser ------------------------------------------------------------

_CMP = ("=", "<>", "<", ">", "<=", ">=")
_LITERAL_WORDS = {"true": True, "false": False, "nothing": None, "empty": "", "null": None}


class _ExprParser:
    def __init__(self, toks: list[Tok], lineno: int):
        self.toks = [t for t in toks if t.kind != "ws"]
        self.i = 0
        self.lineno = lineno

    def error(self, msg: str):
        raise ScriptSyntaxError(msg, self.lineno)

    def peek(self, k: int = 0) -> Optional[Tok]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def word(self, k: int = 0) -> Optional[str]:
        t = self.peek(k)
        return t.text.lower() if t is not None and t.kind == IDENT else None

    def take(self) -> Tok:
        t = self.peek()
        if t is None:
            self.error("unexpected end of line")
        self.i += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Tok:
        t = self.take()
        if t.kind != kind or (text is not None and t.text.lower() != text):
            self.error(f"expected {text or kind}, found {t.text!r}")
        return t

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    # precedence climbing, loosest first
    def expr(self) -> Expr:
        return self.imp()

    def _binary(self, sub, words=(), ops=()):
        left = sub()
        while True:
            t = self.peek()
            if t is None:
                return left
            if t.kind == IDENT and t.text.lower() in words:
                op = t.text.lower()
            elif t.kind == OP and t.text in ops:
                op = t.text
            else:
                return left
            self.i += 1
            left = BinOp(op, left, sub())

    def imp(self):
        return self._binary(self.xor, words=("imp", "eqv"))

    def xor(self):
        return self._binary(self.or_, words=("xor",))

    def or_(self):
        return self._binary(self.and_, words=("or",))

    def and_(self):
        return self._binary(self.not_, words=("and",))

    def not_(self):
        if self.word() == "not":
            self.i += 1
            return Unary("not", self.not_())
        return self.cmp()

    def cmp(self):
        return self._binary(self.concat, words=("is",), ops=_CMP)

    def concat(self):
        return self._binary(self.add, ops=("&",))

    def add(self):
        return self._binary(self.mod, ops=("+", "-"))

    def mod(self):
        return self._binary(self.idiv, words=("mod",))

    def idiv(self):
        return self._binary(self.mul, ops=("\\",))

    def mul(self):
        return self._binary(self.unary, ops=("*", "/"))

    def unary(self):
        t = self.peek()
        if t is not None and t.kind == OP and t.text in ("-", "+"):
            self.i += 1
            return Unary(t.text, self.unary())
        return self.power()

    def power(self):
        base = self.postfix()
        t = self.peek()
        if t is not None and t.kind == OP and t.text == "^":
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def args(self) -> tuple[Expr, ...]:
        self.expect(LPAR)
        out = []
        if self.peek() is not None and self.peek().kind == RPAR:
            self.i += 1
            return ()
        while True:
            t = self.peek()
            if t is not None and t.kind in (COMMA, RPAR):
                out.append(Lit(None))
            else:
                out.append(self.expr())
            t = self.take()
            if t.kind == RPAR:
                return tuple(out)
            if t.kind != COMMA:
                self.error(f"expected ',' or ')', found {t.text!r}")

    def postfix(self) -> Expr:
        node = self.primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            if t.kind == DOT:
                self.i += 1
                name = self.expect(IDENT).text
                node = Member(node, name)
            elif t.kind == LPAR and isinstance(node, (Name, Member, Call)):
                node = Call(node, self.args())
            else:
                return node

    def primary(self) -> Expr:
        t = self.take()
        if t.kind == STR:
            return Lit(t.value)
        if t.kind == NUM:
            return Lit(t.value)
        if t.kind == LPAR:
            e = self.expr()
            self.expect(RPAR)
            return e
        if t.kind == IDENT:
            w = t.text.lower()
            if w in _LITERAL_WORDS:
                return Lit(_LITERAL_WORDS[w])
            if w == "new":
                cls = self.expect(IDENT).text
                return Call(Name("New"), (Lit(cls),))
            return Name(t.text.strip("[]"))
        if t.kind == DOT:
            self.error("member access without subject")
        self.error(f"unexpected token {t.text!r}")


def parse_expr(text_or_toks, lineno: int = 0) -> Expr:
    toks = tokenize(text_or_toks, lineno) if isinstance(text_or_toks, str) else text_or_toks
    p = _ExprParser(toks, lineno)
    e = p.expr()
    if not p.at_end():
        p.error(f"unexpected {p.peek().text!r} after expression")
    return e


# -- statement parser ---------------------------------------------------------------

_NOP_WORDS = frozenset({"option", "randomize", "dim", "redim", "erase", "stop"})


class _Program:
    def __init__(self, lines: list[Line]):
        self.lines = [ln for ln in lines if ln.tag in (CODE, DECLARATION)]
        self.i = 0
        self.procedures: dict[str, Procedure] = {}

    def words(self, line: Line) -> list[str]:
        return [t.text.lower() for t in tokenize(line.text, line.lineno, keep_ws=False) if t.kind == IDENT][:3]

    def block(self, terminators: tuple[str, ...]) -> tuple[list[Stmt], Optional[Line]]:
        out: list[Stmt] = []
        while self.i < len(self.lines):
            line = self.lines[self.i]
            head = self._head(line)
            if head in terminators:
                self.i += 1
                return out, line
            self.i += 1
            st = self.statement(line, head)
            if isinstance(st, list):
                out.extend(st)
            elif st is not None:
                out.append(st)
        if terminators:
            raise ScriptSyntaxError(f"missing {' / '.join(terminators)}", self.lines[-1].lineno if self.lines else 0)
        return out, None

    def _head(self, line: Line) -> str:
        w = self.words(line)
        if not w:
            return ""
        if w[0] == "end" and len(w) > 1:
            return "end " + w[1]
        if w[0] in ("public", "private") and len(w) > 1 and w[1] in ("sub", "function"):
            return w[1]
        if w[0] == "loop":
            return "loop"
        if w[0] == "case":
            return "case"
        return w[0]

    def statement(self, line: Line, head: str) -> Optional[Stmt]:
        toks = tokenize(line.text, line.lineno, keep_ws=False)
        ln = line.lineno
        if line.tag == DECLARATION:
            if head == "const" or (head in ("public", "private") and len(toks) > 1 and toks[1].text.lower() == "const"):
                return self._const(toks, ln)
            return None
        p = _ExprParser(toks, ln)
        if head == "if":
            return self._if(p, ln)
        if head in ("sub", "function"):
            self._procedure(p, ln)
            return None
        if head == "while":
            p.i = 1
            cond = p.expr()
            body, _ = self.block(("wend",))
            return Loop("while", body, cond=cond, line=ln)
        if head == "do":
            p.i = 1
            cond = None
            if p.word() in ("while", "until"):
                neg = p.take().text.lower() == "until"
                cond = p.expr()
                cond = Unary("not", cond) if neg else cond
            body, end = self.block(("loop",))
            ep = _ExprParser(tokenize(end.text, end.lineno, keep_ws=False), end.lineno)
            ep.i = 1
            post = None
            if ep.word() in ("while", "until"):
                neg = ep.take().text.lower() == "until"
                post = ep.expr()
                post = Unary("not", post) if neg else post
            return Loop("do", body, cond=cond, post_cond=post, line=ln)
        if head == "for":
            return self._for(p, ln)
        if head == "select":
            return self._select(p, ln)
        if head == "exit":
            return Exit(p.word(1) or "", line=ln)
        if head in ("execute", "executeglobal"):
            p.i = 1
            return Execute(p.expr(), line=ln)
        if head == "on" or head in _NOP_WORDS:
            return Nop(line=ln)
        if head in ("end", "wend", "next", "else", "elseif", "loop", "case") or head.startswith("end "):
            raise ScriptSyntaxError(f"unexpected {line.text.strip()!r}", ln)
        if head == "call":
            p.i = 1
            return ExprStmt(self._call_rest(p), line=ln)
        is_set = head == "set"
        if is_set:
            p.i = 1
        target = p.postfix()
        t = p.peek()
        if t is not None and t.kind == OP and t.text == "=":
            p.i += 1
            value = p.expr()
            if not p.at_end():
                p.error(f"unexpected {p.peek().text!r}")
            return Assign(target, value, is_set, line=ln)
        if is_set:
            p.error("expected '=' in Set statement")
        p.i = 0
        return ExprStmt(self._call_rest(p), line=ln)

    def _call_rest(self, p: _ExprParser) -> Expr:
        """Parse a call statement, with or without parentheses around arguments."""
        target = p.postfix()
        if p.at_end():
            return target if isinstance(target, Call) else Call(target, ())
        args: list[Expr] = []
        if isinstance(target, Call) and p.peek().kind == COMMA:
            args.extend(target.args)
            target = target.func
            p.i += 1
        while True:
            t = p.peek()
            if t is not None and t.kind == COMMA:
                args.append(Lit(None))
            else:
                args.append(p.expr())
            if p.at_end():
                break
            p.expect(COMMA)
        return Call(target, tuple(args))

    def _const(self, toks, ln) -> list[Stmt]:
        p = _ExprParser(toks, ln)
        while p.word() in ("public", "private", "const"):
            p.i += 1
        assigns: list[Stmt] = []
        while not p.at_end():
            name = p.expect(IDENT).text
            p.expect(OP, "=")
            assigns.append(Assign(Name(name), p.expr(), line=ln))
            if not p.at_end():
                p.expect(COMMA)
        return assigns

    def _if(self, p: _ExprParser, ln: int) -> Stmt:
        p.i = 1
        cond = p.expr()
        p.expect(IDENT, "then")
        branches = []
        orelse: list[Stmt] = []
        body, end = self.block(("elseif", "else", "end if"))
        branches.append((cond, body))
        while True:
            head = self._head(end)
            if head == "elseif":
                ep = _ExprParser(tokenize(end.text, end.lineno, keep_ws=False), end.lineno)
                ep.i = 1
                c = ep.expr()
                ep.expect(IDENT, "then")
                body, end = self.block(("elseif", "else", "end if"))
                branches.append((c, body))
            elif head == "else":
                orelse, end = self.block(("end if",))
            else:
                return If(branches, orelse, line=ln)

    def _for(self, p: _ExprParser, ln: int) -> Stmt:
        p.i = 1
        if p.word() == "each":
            p.i += 1
            var = p.expect(IDENT).text
            p.expect(IDENT, "in")
            coll = p.expr()
            body, _ = self.block(("next",))
            return Loop("foreach", body, var=var, start=coll, line=ln)
        var = p.expect(IDENT).text
        p.expect(OP, "=")
        start = p.expr()
        p.expect(IDENT, "to")
        stop = p.expr()
        step = None
        if p.word() == "step":
            p.i += 1
            step = p.expr()
        body, _ = self.block(("next",))
        return Loop("for", body, var=var, start=start, stop=stop, step=step, line=ln)

    def _select(self, p: _ExprParser, ln: int) -> Stmt:
        p.i = 1
        p.expect(IDENT, "case")
        subject = p.expr()
        cases: list = []
        orelse: list[Stmt] = []
        # skip anything before the first Case
        _, end = self.block(("case", "end select"))
        while self._head(end) == "case":
            cp = _ExprParser(tokenize(end.text, end.lineno, keep_ws=False), end.lineno)
            cp.i = 1
            is_else = cp.word() == "else"
            values: list[Expr] = []
            if not is_else:
                while True:
                    values.append(cp.expr())
                    if cp.at_end():
                        break
                    cp.expect(COMMA)
            body, end = self.block(("case", "end select"))
            if is_else:
                orelse = body
            else:
                cases.append((tuple(values), body))
        return Select(subject, cases, orelse, line=ln)

    def _procedure(self, p: _ExprParser, ln: int) -> None:
        while p.word() in ("public", "private", "default"):
            p.i += 1
        kind = p.take().text.lower()
        name = p.expect(IDENT).text
        params: list[str] = []
        if p.peek() is not None and p.peek().kind == LPAR:
            p.i += 1
            while p.peek() is not None and p.peek().kind != RPAR:
                if p.word() in ("byval", "byref", "optional"):
                    p.i += 1
                    continue
                params.append(p.expect(IDENT).text)
                if p.peek() is not None and p.peek().kind == LPAR:
                    p.i += 1
                    p.expect(RPAR)
                if p.peek() is not None and p.peek().kind == COMMA:
                    p.i += 1
            p.expect(RPAR)
        body, end = self.block(("end " + kind,))
        proc = Procedure(name, tuple(params), kind == "function", body, (ln, end.lineno))
        if proc.key in self.procedures:
            raise ScriptSyntaxError(f"procedure {name} defined twice", ln)
        self.procedures[proc.key] = proc


def parse_program(lines: list[Line]) -> tuple[list[Stmt], dict[str, Procedure]]:
    prog = _Program(lines)
    body, _ = prog.block(())
    return body, prog.procedures

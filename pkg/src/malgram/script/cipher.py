"""Recovery of ciphered string literals by running the script's own decryption
routine concretely on each literal passed to it."""

from __future__ import annotations

import re

from ..errors import UnsupportedCipher, WholeBodyCipher
from . import builtins as bi
from .lexer import quote
from .normalize import normalize
from .parser import Assign, BinOp, Call, Exit, Expr, If, Lit, Loop, Name, Nop, Procedure, Stmt, Unary
from .structure import static_scan

_STEP_LIMIT = 200_000


class _Return(Exception):
    pass


class _Runner:
    def __init__(self, proc: Procedure):
        self.proc = proc
        self.steps = 0

    def run(self, arg: str) -> str:
        key = self.proc.key
        env = {key: ""}
        if self.proc.params:
            env[self.proc.params[0].lower()] = arg
        for p in self.proc.params[1:]:
            env[p.lower()] = ""
        try:
            self.block(self.proc.body, env)
        except _Return:
            pass
        return bi.to_str(env.get(key, ""))

    def tick(self):
        self.steps += 1
        if self.steps > _STEP_LIMIT:
            raise UnsupportedCipher(f"routine {self.proc.name} does not terminate within the step budget")

    def block(self, stmts: list[Stmt], env: dict) -> None:
        for s in stmts:
            self.tick()
            self.stmt(s, env)

    def stmt(self, s: Stmt, env: dict) -> None:
        if isinstance(s, Assign) and isinstance(s.target, Name):
            env[s.target.key] = self.ev(s.value, env)
        elif isinstance(s, If):
            for cond, body in s.branches:
                if self.truth(self.ev(cond, env)):
                    self.block(body, env)
                    return
            self.block(s.orelse, env)
        elif isinstance(s, Loop) and s.kind == "for":
            var = s.var.lower()
            i = bi.to_num(self.ev(s.start, env))
            stop = bi.to_num(self.ev(s.stop, env))
            step = bi.to_num(self.ev(s.step, env)) if s.step is not None else 1
            if step == 0:
                raise UnsupportedCipher("For loop with zero step")
            try:
                while (i <= stop) if step > 0 else (i >= stop):
                    self.tick()
                    env[var] = i
                    self.block(s.body, env)
                    i = bi.to_num(env[var]) + step
                env[var] = i
            except _ExitLoop:
                pass
        elif isinstance(s, Loop) and s.kind in ("while", "do"):
            try:
                while True:
                    self.tick()
                    if s.cond is not None and not self.truth(self.ev(s.cond, env)):
                        break
                    self.block(s.body, env)
                    if s.post_cond is not None and not self.truth(self.ev(s.post_cond, env)):
                        break
            except _ExitLoop:
                pass
        elif isinstance(s, Exit):
            if s.what.lower() in ("function", "sub"):
                raise _Return()
            raise _ExitLoop()
        elif isinstance(s, Nop):
            pass
        else:
            raise UnsupportedCipher(f"line {s.line}: {type(s).__name__} statement in decryption routine")

    @staticmethod
    def truth(v) -> bool:
        if isinstance(v, bool):
            return v
        try:
            return bi.to_num(v) != 0
        except ValueError:
            raise UnsupportedCipher(f"non-boolean condition {v!r}") from None

    def ev(self, e: Expr, env: dict):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Name):
            if e.key not in env:
                if e.key in bi.CONSTANTS:
                    return bi.CONSTANTS[e.key]
                raise UnsupportedCipher(f"unbound name {e.id}")
            return env[e.key]
        if isinstance(e, Unary):
            v = self.ev(e.operand, env)
            if e.op == "not":
                return not self.truth(v)
            n = bi.to_num(v)
            return -n if e.op == "-" else n
        if isinstance(e, BinOp):
            try:
                return bi.arith(e.op, self.ev(e.left, env), self.ev(e.right, env))
            except (ValueError, ZeroDivisionError) as exc:
                raise UnsupportedCipher(f"operator {e.op}: {exc}") from None
        if isinstance(e, Call) and isinstance(e.func, Name):
            fn = bi.BUILTINS.get(e.func.key)
            if fn is None:
                raise UnsupportedCipher(f"call to {e.func.id} in decryption routine")
            try:
                return fn(*[self.ev(a, env) for a in e.args])
            except (ValueError, TypeError, IndexError) as exc:
                raise UnsupportedCipher(f"{e.func.id}: {exc}") from None
        raise UnsupportedCipher(f"unsupported expression {e!r}")


class _ExitLoop(Exception):
    pass


def decrypt_strings(script: str, routine: str) -> str:
    """Replace every ``routine("literal")`` call by the decrypted literal."""
    structure = static_scan(normalize(script))
    proc = structure.functions.get(routine.lower())
    if proc is None or not proc.is_function:
        raise UnsupportedCipher(f"no decryption function named {routine!r}")
    runner = _Runner(proc)
    pattern = re.compile(r"\b" + re.escape(proc.name) + r'\s*\(\s*"((?:[^"\n]|"")*)"\s*\)', re.IGNORECASE)

    def repl(m: re.Match) -> str:
        plain = runner.run(m.group(1).replace('""', '"'))
        if "\n" in plain or "\r" in plain:
            raise WholeBodyCipher(f"literal at offset {m.start()} decrypts to code lines")
        return quote(plain)

    head, tail = _split_definition(script, proc.name)
    return pattern.sub(repl, head) + tail[0] + pattern.sub(repl, tail[1])


def _split_definition(script: str, name: str):
    """Split around the routine's own definition so that it is left untouched."""
    start = re.search(r"(?im)^[ \t]*(?:(?:public|private)[ \t]+)?function[ \t]+" + re.escape(name) + r"\b", script)
    if start is None:
        return script, ("", "")
    end = re.compile(r"(?im)^[ \t]*end[ \t]+function\b.*$").search(script, start.end())
    stop = end.end() if end else len(script)
    return script[: start.start()], (script[start.start():stop], script[stop:])

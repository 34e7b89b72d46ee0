"""Concrete semantics of the string and conversion builtins.

Each function takes already-evaluated Python values. Callers only invoke them
when every argument is known.
"""

from __future__ import annotations

import ntpath


def _s(v) -> str:
    if isinstance(v, bool):
        return "True" if v else "False"
    if v is None:
        return ""
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _i(v) -> int:
    if isinstance(v, str):
        v = v.strip() or "0"
        return int(float(v))
    return int(v)


def _mid(s, start, length=None):
    s = _s(s)
    start = _i(start)
    if start < 1:
        raise ValueError("Mid start must be >= 1")
    return s[start - 1:] if length is None else s[start - 1:start - 1 + _i(length)]


def _instr(*args):
    if len(args) == 2:
        start, hay, needle = 1, args[0], args[1]
    else:
        start, hay, needle = args[0], args[1], args[2]
    return _s(hay).find(_s(needle), _i(start) - 1) + 1


def _replace(s, find, repl, *_):
    return _s(s).replace(_s(find), _s(repl))


def _chr(n):
    return chr(_i(n))


def _asc(s):
    s = _s(s)
    if not s:
        raise ValueError("Asc of empty string")
    return ord(s[0])


def _cint(v):
    f = float(v) if not isinstance(v, bool) else int(v)
    return int(round(f))


def _to_num(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return v
    if isinstance(v, bool):
        return -1 if v else 0
    s = _s(v).strip()
    try:
        return int(s)
    except ValueError:
        return float(s)


BUILTINS = {
    "mid": _mid,
    "mid$": _mid,
    "left": lambda s, n: _s(s)[: _i(n)],
    "left$": lambda s, n: _s(s)[: _i(n)],
    "right": lambda s, n: _s(s)[len(_s(s)) - _i(n):] if _i(n) else "",
    "right$": lambda s, n: _s(s)[len(_s(s)) - _i(n):] if _i(n) else "",
    "len": lambda s: len(_s(s)),
    "trim": lambda s: _s(s).strip(" "),
    "ltrim": lambda s: _s(s).lstrip(" "),
    "rtrim": lambda s: _s(s).rstrip(" "),
    "ucase": lambda s: _s(s).upper(),
    "lcase": lambda s: _s(s).lower(),
    "replace": _replace,
    "strreverse": lambda s: _s(s)[::-1],
    "space": lambda n: " " * _i(n),
    "string": lambda n, c: _s(c)[:1] * _i(n),
    "instr": _instr,
    "chr": _chr,
    "chrw": _chr,
    "chr$": _chr,
    "asc": _asc,
    "ascw": _asc,
    "cstr": _s,
    "cint": _cint,
    "clng": _cint,
    "int": lambda v: int(float(_to_num(v)) // 1),
    "fix": lambda v: int(float(_to_num(v))),
    "abs": lambda v: abs(_to_num(v)),
    "hex": lambda v: format(_i(v), "X"),
}

# Builtins whose result carries the identity of their first argument.
STRING_TRANSFORMS = frozenset(
    {"mid", "mid$", "left", "left$", "right", "right$", "trim", "ltrim", "rtrim",
     "ucase", "lcase", "replace", "strreverse", "cstr"}
)


def to_str(v) -> str:
    return _s(v)


def to_num(v):
    return _to_num(v)


def file_name(path: str) -> str:
    return ntpath.basename(path)


def build_path(a: str, b: str) -> str:
    return a.rstrip("\\") + "\\" + b.lstrip("\\")


def arith(op: str, a, b):
    """Binary operator on concrete values; raises ValueError/ZeroDivisionError."""
    if op == "&":
        return _s(a) + _s(b)
    if op in ("=", "<>", "<", ">", "<=", ">="):
        if isinstance(a, str) and isinstance(b, str):
            x, y = a, b
        else:
            x, y = _to_num(a), _to_num(b)
        return {
            "=": x == y, "<>": x != y, "<": x < y, ">": x > y, "<=": x <= y, ">=": x >= y,
        }[op]
    if op in ("and", "or", "xor") and isinstance(a, bool) and isinstance(b, bool):
        return {"and": a and b, "or": a or b, "xor": a != b}[op]
    x, y = _to_num(a), _to_num(b)
    if op == "+":
        if isinstance(a, str) and isinstance(b, str):
            return a + b
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    if op == "/":
        return x / y
    if op == "\\":
        return int(x) // int(y)
    if op == "mod":
        return int(x) % int(y)
    if op == "^":
        return x ** y
    if op == "and":
        return int(x) & int(y)
    if op == "or":
        return int(x) | int(y)
    if op == "xor":
        return int(x) ^ int(y)
    raise ValueError(f"unsupported operator {op}")


CONSTANTS = {
    "vbcrlf": "\r\n",
    "vbnewline": "\r\n",
    "vbcr": "\r",
    "vblf": "\n",
    "vbtab": "\t",
    "vbnullstring": "",
    "vbnullchar": "\0",
}

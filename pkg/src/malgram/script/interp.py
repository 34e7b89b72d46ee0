"""Partial interpreter: explores both arms of every conditional, unrolls loops
once and turns monitored manager calls into events."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

from ..apimap import ApiCatalog, ApiCatalogEntry
from ..classifier import AnalysisContext, ResourceConfig, canonical_path
from ..errors import ExplorationBudgetExceeded, Incompatible
from ..model import (
    Event,
    InteractionClass as IC,
    Nature,
    ObjectDescriptor,
    ObjectType,
    poset_leq,
    type_refine,
)
from . import builtins as bi
from .normalize import normalize
from .parser import (
    Assign,
    BinOp,
    Call,
    Execute,
    Exit,
    Expr,
    ExprStmt,
    If,
    Lit,
    Loop,
    Member,
    Name,
    Nop,
    Procedure,
    Select,
    Stmt,
    Unary,
    parse_program,
)
from .structure import ScriptStructure, manager_kind

log = logging.getLogger(__name__)

DEFAULT_SELF = r"C:\Users\victim\script.vbs"
DEFAULT_PATH_CAP = 256
_MAX_EXECUTE_DEPTH = 16

_SPECIAL_FOLDERS = {0: r"C:\Windows", 1: r"C:\Windows\System32", 2: r"C:\Windows\Temp"}
_TEXT_PROPERTIES = frozenset({"path", "name", "fullname", "shortpath", "shortname"})
# Manager and object kinds reached through a property of a known kind.
_PROPERTY_KINDS = {
    ("file", "drives"): "drives",
    ("mailitem", "attachments"): "attachments",
    ("mailitem", "recipients"): "recipients",
}
_ELEMENT_KINDS = {"drives": "drive", "files": "fileobj", "subfolders": "folder"}


class _Unknown:
    def __repr__(self):
        return "UNKNOWN"


UNKNOWN = _Unknown()


@dataclass(frozen=True)
class Val:
    """An abstract value: concrete content when known, the descriptor it
    carries for data-flow, and the manager/object kind for method dispatch."""

    value: object = UNKNOWN
    desc: Optional[ObjectDescriptor] = None
    kind: Optional[str] = None

    @property
    def known(self) -> bool:
        return self.value is not UNKNOWN

    @property
    def text(self) -> Optional[str]:
        return bi.to_str(self.value) if self.known else None


@dataclass
class BindingEnv:
    refs: dict[str, Val] = field(default_factory=dict)
    call_stack: tuple[str, ...] = ()

    def fork(self) -> "BindingEnv":
        return BindingEnv(dict(self.refs), self.call_stack)


@dataclass
class PathState:
    env: BindingEnv = field(default_factory=BindingEnv)
    events: list[Event] = field(default_factory=list)
    names: dict[str, ObjectDescriptor] = field(default_factory=dict)
    loop_depth: int = 0
    exiting: Optional[str] = None
    seq: int = 0

    def fork(self) -> "PathState":
        return PathState(self.env.fork(), list(self.events), dict(self.names),
                         self.loop_depth, self.exiting, self.seq)


def _greatest(descs: list[ObjectDescriptor]) -> Optional[ObjectDescriptor]:
    for d in descs:
        if not any(e.otype != d.otype and poset_leq(d.otype, e.otype) for e in descs):
            return d
    return None


class Explorer:
    def __init__(
        self,
        structure: ScriptStructure,
        cfg: ResourceConfig,
        catalog: ApiCatalog,
        self_path: str = DEFAULT_SELF,
        path_cap: int = DEFAULT_PATH_CAP,
        ctx: Optional[AnalysisContext] = None,
    ):
        self.structure = structure
        self.catalog = catalog
        self.ctx = ctx or AnalysisContext(cfg)
        self.ctx.add_self(self_path)
        self.self_path = self_path
        self.path_cap = path_cap
        self.functions: dict[str, Procedure] = dict(structure.functions)
        self.final: list[PathState] = []
        self._intermediates = itertools.count(1)
        self._execute_depth = 0

    # -- driver --------------------------------------------------------------------

    def run(self) -> list[Event]:
        self.final = self._block(self.structure.program, [PathState()])
        streams = [s.events for s in self.final]
        if len(streams) == 1:
            return list(streams[0])
        prefix = 0
        while all(prefix < len(s) for s in streams) and all(s[prefix] == streams[0][prefix] for s in streams):
            prefix += 1
        out = list(streams[0][:prefix])
        for i, s in enumerate(streams):
            out.extend(replace(e, path=i) for e in s[prefix:])
        return out

    def _block(self, stmts: list[Stmt], states: list[PathState]) -> list[PathState]:
        for stmt in stmts:
            nxt: list[PathState] = []
            for st in states:
                if st.exiting:
                    nxt.append(st)
                else:
                    nxt.extend(self._exec(stmt, st))
            if len(nxt) > self.path_cap:
                raise ExplorationBudgetExceeded(
                    f"line {stmt.line}: {len(nxt)} paths exceed the cap of {self.path_cap}"
                )
            states = nxt
        return states

    # -- events and identities -----------------------------------------------------------

    def _emit(self, st: PathState, cls: IC, objs, value: Optional[str] = None) -> None:
        st.seq += 1
        st.events.append(Event(st.seq, cls, tuple(objs), loop=st.loop_depth > 0, value=value))

    def _named(self, st: PathState, text: str) -> ObjectDescriptor:
        key = canonical_path(text) or text
        d = st.names.get(key)
        if d is None:
            d = self.ctx.describe_string(text)
            st.names[key] = d
        return d

    def _obj(self, st: PathState, v: Val) -> ObjectDescriptor:
        if v.desc is not None:
            return v.desc
        if v.known and v.text:
            return self._named(st, v.text)
        return ObjectDescriptor(self.ctx.ids(), Nature.OTHER, ObjectType.OBJ_ANY)

    def _fresh_var(self) -> ObjectDescriptor:
        return ObjectDescriptor(self.ctx.var_ids(), Nature.VARIABLE, ObjectType.VAR)

    def _buffer(self, v: Val) -> ObjectDescriptor:
        # data buffers are variables; a variable can never stand for the script itself
        if v.desc is None:
            return self._fresh_var()
        try:
            return v.desc.with_type(type_refine(v.desc.otype, ObjectType.VAR), Nature.VARIABLE)
        except Incompatible:
            return self._fresh_var()

    def _forget(self, st: PathState, d: ObjectDescriptor) -> None:
        for k, v in list(st.names.items()):
            if v.id == d.id:
                del st.names[k]

    def _self_val(self, st: PathState, full: bool) -> Val:
        d = self._named(st, self.self_path)
        text = self.self_path if full else bi.file_name(self.self_path)
        return Val(text, d)

    # -- statements -----------------------------------------------------------------

    def _exec(self, stmt: Stmt, st: PathState) -> list[PathState]:
        if isinstance(stmt, Assign):
            out = []
            for s, v in self._ev(stmt.value, st):
                self._assign(stmt.target, v, s)
                out.append(s)
            return out
        if isinstance(stmt, ExprStmt):
            return [s for s, _ in self._ev(stmt.expr, st)]
        if isinstance(stmt, If):
            return self._if_chain(stmt.branches, stmt.orelse, st)
        if isinstance(stmt, Select):
            return self._select(stmt, st)
        if isinstance(stmt, Loop):
            return self._loop(stmt, st)
        if isinstance(stmt, Execute):
            return self._execute(stmt, st)
        if isinstance(stmt, Exit):
            st.exiting = stmt.what.lower() or "sub"
            return [st]
        if isinstance(stmt, Nop):
            return [st]
        raise TypeError(f"unhandled statement {stmt!r}")

    def _assign(self, target: Expr, v: Val, st: PathState) -> None:
        if isinstance(target, Name):
            st.env.refs[target.key] = v
        elif isinstance(target, Call) and isinstance(target.func, Name):
            st.env.refs[target.func.key] = v

    @staticmethod
    def _arm_values(cond: Val) -> tuple[str, str]:
        if cond.kind == "exists":
            return "present", "absent"
        if cond.kind == "absent":
            return "absent", "present"
        return "unknown", "unknown"

    def _if_chain(self, branches, orelse, st: PathState) -> list[PathState]:
        cond, body = branches[0]
        out: list[PathState] = []
        for s, v in self._ev(cond, st):
            objs = (v.desc,) if v.kind in ("exists", "absent") and v.desc is not None else ()
            yes, no = self._arm_values(v)
            taken = s.fork()
            self._emit(taken, IC.BRANCH, objs, yes)
            out.extend(self._block(body, [taken]))
            self._emit(s, IC.BRANCH, objs, no)
            if len(branches) > 1:
                out.extend(self._if_chain(branches[1:], orelse, s))
            else:
                out.extend(self._block(orelse, [s]))
        return out

    def _select(self, stmt: Select, st: PathState) -> list[PathState]:
        out: list[PathState] = []
        for s, _ in self._ev(stmt.subject, st):
            for _, body in stmt.cases:
                arm = s.fork()
                self._emit(arm, IC.BRANCH, (), "unknown")
                out.extend(self._block(body, [arm]))
            self._emit(s, IC.BRANCH, (), "unknown")
            out.extend(self._block(stmt.orelse, [s]))
        return out

    def _loop(self, stmt: Loop, st: PathState) -> list[PathState]:
        st.loop_depth += 1
        states = [st]
        if stmt.kind == "for":
            states = []
            for s, v in self._ev(stmt.start, st):
                s.env.refs[stmt.var.lower()] = v
                states.extend(x for x, _ in self._ev(stmt.stop, s))
        elif stmt.kind == "foreach":
            states = []
            for s, coll in self._ev(stmt.start, st):
                kind = _ELEMENT_KINDS.get(coll.kind or "", "item")
                s.env.refs[stmt.var.lower()] = Val(kind=kind, desc=coll.desc if kind == "item" else None)
                states.append(s)
        elif stmt.cond is not None:
            states = [s for s, _ in self._ev(stmt.cond, st)]
        states = self._block(stmt.body, states)
        if stmt.post_cond is not None:
            states = [s for x in states if not x.exiting for s, _ in self._ev(stmt.post_cond, x)] + [
                x for x in states if x.exiting
            ]
        for s in states:
            s.loop_depth -= 1
            if s.exiting in ("for", "do", "while"):
                s.exiting = None
        return states

    def _execute(self, stmt: Execute, st: PathState) -> list[PathState]:
        out: list[PathState] = []
        for s, v in self._ev(stmt.expr, st):
            if not v.known or self._execute_depth >= _MAX_EXECUTE_DEPTH:
                out.append(s)
                continue
            body, procs = parse_program(normalize(v.text))
            self.functions.update(procs)
            self._execute_depth += 1
            try:
                out.extend(self._block(body, [s]))
            finally:
                self._execute_depth -= 1
        return out

    # -- expressions ----------------------------------------------------------------------

    def _ev(self, e: Expr, st: PathState) -> list[tuple[PathState, Val]]:
        if isinstance(e, Lit):
            return [(st, Val(e.value))]
        if isinstance(e, Name):
            return self._name(e, st)
        if isinstance(e, Member):
            return [(s, self._member(s, rv, e.name)) for s, rv in self._ev(e.obj, st)]
        if isinstance(e, Call):
            return self._call(e, st)
        if isinstance(e, Unary):
            return [(s, self._unary(e.op, v)) for s, v in self._ev(e.operand, st)]
        if isinstance(e, BinOp):
            return [(s, self._binop(e.op, l, r)) for s, (l, r) in self._ev_all((e.left, e.right), st)]
        raise TypeError(f"unhandled expression {e!r}")

    def _ev_all(self, exprs, st: PathState) -> list[tuple[PathState, list[Val]]]:
        acc = [(st, [])]
        for e in exprs:
            acc = [(s2, vals + [v]) for s, vals in acc for s2, v in self._ev(e, s)]
        return acc

    def _name(self, e: Name, st: PathState):
        key = e.key
        if key in st.env.refs:
            return [(st, st.env.refs[key])]
        if key == "wscript":
            return [(st, Val(kind="wscript"))]
        if key in bi.CONSTANTS:
            return [(st, Val(bi.CONSTANTS[key]))]
        if key in self.functions:
            return self._call_proc(self.functions[key], [], st)
        return [(st, Val())]

    def _unary(self, op: str, v: Val) -> Val:
        if op == "not":
            if v.kind in ("exists", "absent"):
                return replace(v, kind="absent" if v.kind == "exists" else "exists")
            if isinstance(v.value, bool):
                return Val(not v.value)
            return Val()
        if v.known:
            try:
                n = bi.to_num(v.value)
                return Val(-n if op == "-" else n)
            except ValueError:
                return Val()
        return Val()

    def _binop(self, op: str, l: Val, r: Val) -> Val:
        tests = [x for x in (l, r) if x.kind in ("exists", "absent")]
        if op in ("=", "<>") and len(tests) == 1:
            other = r if tests[0] is l else l
            if isinstance(other.value, bool):
                flip = (other.value is False) == (op == "=")
                t = tests[0]
                if flip:
                    return replace(t, kind="absent" if t.kind == "exists" else "exists")
                return t
        value = UNKNOWN
        if l.known and r.known:
            try:
                value = bi.arith(op, l.value, r.value)
            except (ValueError, TypeError, ZeroDivisionError, OverflowError):
                value = UNKNOWN
        desc = None
        if op in ("&", "+"):
            # only the operand with the greater type keeps flowing
            desc = _greatest([x.desc for x in (l, r) if x.desc is not None])
        return Val(value, desc)

    def _member(self, st: PathState, rv: Val, name: str) -> Val:
        low = name.lower()
        if rv.kind == "wscript":
            if low in ("scriptfullname", "scriptname"):
                return self._self_val(st, low == "scriptfullname")
            return Val()
        if rv.kind and self.catalog.entries_for(f"{rv.kind}.{name}"):
            return self._method(st, rv, name, [])
        kind = _PROPERTY_KINDS.get((rv.kind, low), low)
        if low in _TEXT_PROPERTIES:
            return Val(rv.value if rv.known else UNKNOWN, rv.desc, None)
        return Val(kind=kind, desc=rv.desc)

    def _call(self, e: Call, st: PathState):
        f = e.func
        if isinstance(f, Name):
            key = f.key
            if key in st.env.refs and key not in self.functions:
                # array indexing keeps the data-flow of the array
                return [(s, st.env.refs[key]) for s, _ in self._ev_all(e.args, st)]
            if key in self.functions:
                return [
                    r for s, args in self._ev_all(e.args, st)
                    for r in self._call_proc(self.functions[key], args, s)
                ]
            return [(s, self._builtin(key, args)) for s, args in self._ev_all(e.args, st)]
        if isinstance(f, Member):
            out = []
            for s, rv in self._ev(f.obj, st):
                if isinstance(f.obj, (Call, Member)):
                    s.env.refs[f"__int{next(self._intermediates)}"] = rv
                for s2, args in self._ev_all(e.args, s):
                    out.append((s2, self._method(s2, rv, f.name, args)))
            return out
        return [(s, Val()) for s, _ in self._ev_all(e.args, st)]

    def _builtin(self, key: str, args: list[Val]) -> Val:
        if key in ("createobject", "getobject"):
            cls = args[0].text if args and args[0].known else None
            return Val(kind=(manager_kind(cls) or cls.lower()) if cls else None)
        fn = bi.BUILTINS.get(key)
        if fn is None:
            return Val()
        desc = args[0].desc if key in bi.STRING_TRANSFORMS and args else None
        if all(a.known for a in args):
            try:
                return Val(fn(*[a.value for a in args]), desc)
            except (ValueError, TypeError, IndexError, OverflowError):
                pass
        return Val(desc=desc)

    def _call_proc(self, proc: Procedure, args: list[Val], st: PathState):
        key = proc.key
        if key in st.env.call_stack:
            log.debug("recursive call to %s blocked", proc.name)
            return [(st, Val())]
        names = [p.lower() for p in proc.params] + [key]
        saved = {n: st.env.refs.get(n) for n in names}
        for i, p in enumerate(proc.params):
            st.env.refs[p.lower()] = args[i] if i < len(args) else Val()
        st.env.refs[key] = Val()
        st.env.call_stack = st.env.call_stack + (key,)
        out = []
        for s in self._block(proc.body, [st]):
            ret = s.env.refs.get(key, Val()) if proc.is_function else Val()
            for n, v in saved.items():
                if v is None:
                    s.env.refs.pop(n, None)
                else:
                    s.env.refs[n] = v
            s.env.call_stack = s.env.call_stack[:-1]
            if s.exiting in ("sub", "function"):
                s.exiting = None
            out.append((s, ret))
        return out

    # -- manager methods ----------------------------------------------------------------

    def _method(self, st: PathState, rv: Val, name: str, args: list[Val]) -> Val:
        low = name.lower()
        if rv.kind == "wscript":
            if low in ("createobject", "getobject"):
                return self._builtin(low, args)
            if low == "quit":
                st.exiting = "all"
            return Val()
        if rv.kind == "file":
            known = all(a.known for a in args)
            if low == "getspecialfolder" and known and args:
                try:
                    folder = _SPECIAL_FOLDERS.get(int(bi.to_num(args[0].value)))
                except ValueError:
                    folder = None
                return Val(folder) if folder else Val()
            if low == "getfilename" and args:
                return Val(bi.file_name(args[0].text), args[0].desc) if known else Val(desc=args[0].desc)
            if low == "buildpath" and len(args) == 2:
                if known:
                    return Val(bi.build_path(args[0].text, args[1].text))
                return Val(desc=_greatest([a.desc for a in args if a.desc is not None]))
            if low in ("getfile", "getfolder") and args:
                kind = "fileobj" if low == "getfile" else "folder"
                return Val(args[0].value, self._obj(st, args[0]), kind)
        if rv.kind is None:
            return Val()
        api = f"{rv.kind}.{name}"
        params = {i: a.value for i, a in enumerate(args) if a.known}
        entry = self.catalog.lookup(api, params)
        if entry is None:
            return Val()
        return self._apply(st, entry, rv, args)

    def _apply(self, st: PathState, entry: ApiCatalogEntry, rv: Val, args: list[Val]) -> Val:
        def arg(key) -> Val:
            if key == "subject":
                return rv
            if isinstance(key, int) and key < len(args):
                return args[key]
            return Val()

        if entry.cls in (IC.READ, IC.WRITE, IC.FORMAT):
            (skey, srole), (tkey, trole) = entry.source_role(), entry.target_role()
            src = self._buffer(arg(skey)) if srole == "buffer" else self._obj(st, arg(skey))
            result = Val()
            if trole == "buffer":
                dst = self._fresh_var() if tkey == "result" else self._buffer(arg(tkey))
                if tkey == "result":
                    result = Val(desc=dst)
            else:
                dst = self._obj(st, arg(tkey))
            if entry.implicit_open:
                self._emit(st, IC.OPEN, (dst,))
            self._emit(st, entry.cls, (src, dst))
            return result
        if not entry.roles:
            self._emit(st, entry.cls, ())
            return Val(kind=entry.returns)
        key, _ = entry.roles[0]
        if key == "result":
            if entry.returns == "mailitem":
                d = ObjectDescriptor(self.ctx.ids(), Nature.MAIL, ObjectType.OBJ_COM, "mailitem")
            else:
                d = ObjectDescriptor(self.ctx.ids(), Nature.OTHER, ObjectType.OBJ_ANY)
            v = Val(desc=d)
        else:
            v = arg(key)
            d = self._obj(st, v)
        self._emit(st, entry.cls, (d,))
        if entry.cls in (IC.CLOSE, IC.DELETE):
            self._forget(st, d)
        if entry.returns:
            return Val(v.value, d, entry.returns)
        if entry.cls == IC.OPEN:
            return Val(desc=d, kind="exists")
        return Val(desc=d)


def explore(
    structure: ScriptStructure,
    cfg: ResourceConfig,
    catalog: ApiCatalog,
    self_path: str = DEFAULT_SELF,
    path_cap: int = DEFAULT_PATH_CAP,
    ctx: Optional[AnalysisContext] = None,
) -> list[Event]:
    """Event stream of every explored path. Events past the shared prefix
    carry the index of their path when more than one path survives."""
    return Explorer(structure, cfg, catalog, self_path, path_cap, ctx).run()

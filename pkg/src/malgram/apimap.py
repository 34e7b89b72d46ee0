"""Mapping of API calls onto interaction classes.

A catalog entry maps an API name, optionally narrowed by constant parameter
values, to an interaction class and a list of object roles telling which
parameters designate which objects. Entries with discriminators are tried
before the name's default entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .errors import CatalogError
from .model import InteractionClass

ROLES = frozenset({"subject", "source", "target", "buffer", "result-handle", "name"})
ParamKey = Union[int, str]


def _param_key(raw) -> ParamKey:
    if isinstance(raw, bool):
        raise CatalogError(f"bad parameter reference {raw!r}")
    if isinstance(raw, int):
        if raw < 0:
            raise CatalogError(f"negative parameter index {raw}")
        return raw
    if isinstance(raw, str) and raw in ("subject", "result"):
        return raw
    if isinstance(raw, str) and raw.isdigit():
        return int(raw)
    raise CatalogError(f"bad parameter reference {raw!r}")


def _norm(value):
    """Comparable form of a discriminator constant or a raw parameter."""
    value = getattr(value, "value", value)
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        s = value.strip()
        try:
            return int(s, 0)
        except ValueError:
            return s.casefold()
    return value


@dataclass(frozen=True)
class Discriminator:
    param: ParamKey
    equals: Any


@dataclass(frozen=True)
class ApiCatalogEntry:
    api: str
    cls: InteractionClass
    roles: tuple[tuple[ParamKey, str], ...]
    when: tuple[Discriminator, ...] = ()
    returns: Optional[str] = None
    implicit_open: bool = False
    note: Optional[str] = None

    def source_role(self) -> Optional[tuple[ParamKey, str]]:
        """Parameter supplying data for value-bearing classes."""
        return self._flow_end("source", InteractionClass.WRITE)

    def target_role(self) -> Optional[tuple[ParamKey, str]]:
        return self._flow_end("target", InteractionClass.READ)

    def _flow_end(self, role, buffer_cls):
        for key, r in self.roles:
            if r == role:
                return key, r
        if self.cls == buffer_cls:
            for key, r in self.roles:
                if r == "buffer":
                    return key, r
        return None

    def matches(self, params: Mapping[ParamKey, Any]) -> bool:
        for d in self.when:
            if d.param not in params or _norm(params[d.param]) != _norm(d.equals):
                return False
        return True

    def to_json(self) -> dict:
        d: dict = {"api": self.api}
        if self.when:
            d["when"] = [{"param": w.param, "equals": w.equals} for w in self.when]
        d["class"] = self.cls.value
        d["roles"] = [{"param": k, "role": r} for k, r in self.roles]
        if self.returns:
            d["returns"] = self.returns
        if self.implicit_open:
            d["implicit_open"] = True
        if self.note:
            d["note"] = self.note
        return d


def _entry_from_json(raw) -> ApiCatalogEntry:
    if not isinstance(raw, dict):
        raise CatalogError(f"catalog entry must be an object: {raw!r}")
    try:
        api = raw["api"]
        cls = InteractionClass.parse(raw["class"])
    except KeyError as exc:
        raise CatalogError(f"entry {raw!r} lacks {exc}") from None
    except ValueError as exc:
        raise CatalogError(f"entry {raw.get('api')!r}: {exc}") from None
    if not isinstance(api, str) or not api:
        raise CatalogError(f"entry {raw!r}: api must be a non-empty string")
    roles = []
    for r in raw.get("roles", []):
        role = r.get("role")
        if role not in ROLES:
            raise CatalogError(f"entry {api}: unknown role {role!r}")
        roles.append((_param_key(r.get("param")), role))
    when = tuple(Discriminator(_param_key(w.get("param")), w.get("equals")) for w in raw.get("when", []))
    entry = ApiCatalogEntry(
        api=api,
        cls=cls,
        roles=tuple(roles),
        when=when,
        returns=raw.get("returns"),
        implicit_open=bool(raw.get("implicit_open", False)),
        note=raw.get("note"),
    )
    if cls in (InteractionClass.READ, InteractionClass.WRITE, InteractionClass.FORMAT):
        sources = [r for _, r in roles if r == "source"] + (
            [r for _, r in roles if r == "buffer"] if cls == InteractionClass.WRITE else []
        )
        targets = [r for _, r in roles if r == "target"] + (
            [r for _, r in roles if r == "buffer"] if cls == InteractionClass.READ else []
        )
        if len(sources) != 1 or len(targets) != 1:
            raise CatalogError(f"entry {api}: {cls.value} needs exactly one source and one target")
    return entry


class ApiCatalog:
    def __init__(self, entries: Sequence[ApiCatalogEntry] = ()):
        self.entries = list(entries)
        self._by_name: dict[str, tuple[list[ApiCatalogEntry], Optional[ApiCatalogEntry]]] = {}
        for e in self.entries:
            key = e.api.casefold()
            specific, default = self._by_name.get(key, ([], None))
            if not e.when:
                if default is not None:
                    raise CatalogError(f"two default entries for {e.api}")
                default = e
            else:
                for other in specific:
                    if not _disjoint(e, other):
                        raise CatalogError(f"ambiguous discriminators for {e.api}: {e.when} / {other.when}")
                specific = specific + [e]
            self._by_name[key] = (specific, default)

    def __len__(self):
        return len(self.entries)

    def entries_for(self, api: str) -> list[ApiCatalogEntry]:
        specific, default = self._by_name.get(api.casefold(), ([], None))
        return specific + ([default] if default else [])

    def lookup(self, api: str, params: Mapping[ParamKey, Any]) -> Optional[ApiCatalogEntry]:
        specific, default = self._by_name.get(api.casefold(), ([], None))
        for e in specific:
            if e.matches(params):
                return e
        return default

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]


def _disjoint(a: ApiCatalogEntry, b: ApiCatalogEntry) -> bool:
    bmap = {d.param: _norm(d.equals) for d in b.when}
    return any(d.param in bmap and bmap[d.param] != _norm(d.equals) for d in a.when)


def load_catalog(text: str) -> ApiCatalog:
    if not text.strip():
        return ApiCatalog()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog is not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("entries", [])
    if not isinstance(data, list):
        raise CatalogError("catalog must be a list of entries")
    return ApiCatalog([_entry_from_json(e) for e in data])


def load_catalog_file(path: str | Path) -> ApiCatalog:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CatalogError(f"cannot read catalog {path}: {exc}") from exc
    return load_catalog(text)


def default_catalog() -> ApiCatalog:
    return load_catalog(resources.files("malgram.data").joinpath("default_catalog.json").read_text("utf-8"))


@dataclass(frozen=True)
class MappedCall:
    cls: InteractionClass
    bindings: tuple[tuple[str, Any], ...]
    entry: ApiCatalogEntry

    def role(self, name: str):
        for r, v in self.bindings:
            if r == name:
                return v
        return None


def _as_mapping(params) -> Mapping[ParamKey, Any]:
    if isinstance(params, Mapping):
        return params
    return dict(enumerate(params))


def map_call(name: str, params, catalog: ApiCatalog) -> Optional[MappedCall]:
    """Classify a call; None when the API is not monitored."""
    pmap = _as_mapping(params)
    entry = catalog.lookup(name, pmap)
    if entry is None:
        return None
    bindings = tuple((role, pmap.get(key)) for key, role in entry.roles)
    return MappedCall(entry.cls, bindings, entry)

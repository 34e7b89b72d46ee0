"""Object classification: decision trees over path strings and addresses.

The trees are data-driven. A :class:`ResourceConfig` lists the critical
locations of the platform (booting, communicating and temporary objects) and
the paths of the analyzed program itself; classification walks a canonical
path against these in priority order ``self > boot > com > temp > perm``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import ConfigError
from .model import (
    IdAllocator,
    Nature,
    ObjectDescriptor,
    ObjectType,
    Span,
    type_refine,
)

_REGISTRY_ROOTS = (
    (r"\registry\machine", "hklm"),
    (r"\registry\user\.default", "hku\\.default"),
    (r"\registry\user", "hkcu"),
    ("hkey_local_machine", "hklm"),
    ("hkey_current_user", "hkcu"),
    ("hkey_classes_root", "hkcr"),
    ("hkey_users", "hku"),
    ("hkey_current_config", "hkcc"),
)
_REGISTRY_SHORT = ("hklm", "hkcu", "hkcr", "hku", "hkcc")
_SOCKET_PREFIXES = (r"\device\afd", r"\device\tcp", r"\device\udp", r"\device\ip")
_MAIL_RE = re.compile(r"^(mailto:)?[^@\s\\/]+@[^@\s\\/]+\.[a-z]{2,}$", re.I)
_DRIVE_RE = re.compile(r"^[a-z]:(\\|$)", re.I)
_FILENAME_RE = re.compile(r"^[\w .~$-]+\.[a-z0-9]{1,4}$", re.I)
_SID_RE = re.compile(r"^s-1-[0-9-]+(_classes)?$", re.I)


def canonical_path(raw: str) -> str:
    """Lower-cased, backslash-separated form with registry roots abbreviated."""
    s = raw.strip().strip('"').replace("/", "\\").lower()
    for prefix in ("\\??\\", "\\\\?\\", "\\\\.\\"):
        if s.startswith(prefix) and _DRIVE_RE.match(s[len(prefix):]):
            s = s[len(prefix):]
    for long, short in _REGISTRY_ROOTS:
        if s == long or s.startswith(long + "\\"):
            rest = s[len(long):]
            if short == "hkcu":
                parts = rest.split("\\")
                if len(parts) > 1 and _SID_RE.match(parts[1]):
                    rest = "\\" + "\\".join(parts[2:]) if len(parts) > 2 else ""
            s = short + rest
            break
    while "\\\\" in s[1:]:
        s = s[0] + s[1:].replace("\\\\", "\\")
    return s.rstrip("\\") if len(s) > 3 else s


@lru_cache(maxsize=1024)
def _glob_regex(pattern: str) -> re.Pattern:
    p = canonical_path(pattern)
    out = []
    i = 0
    while i < len(p):
        if p.startswith("\\**", i) and (i + 3 == len(p) or p[i + 3] == "\\"):
            out.append(r"(?:\\.*)?")
            i += 3
        elif p.startswith("**", i):
            out.append(".*")
            i += 2
        elif p[i] == "*":
            out.append(r"[^\\]*")
            i += 1
        elif p[i] == "?":
            out.append(r"[^\\]")
            i += 1
        else:
            out.append(re.escape(p[i]))
            i += 1
    return re.compile("".join(out), re.I)


def glob_match(pattern: str, path: str) -> bool:
    """Anchored, case-insensitive match; ``*`` spans one segment, ``**`` a subtree."""
    return _glob_regex(pattern).fullmatch(canonical_path(path)) is not None


@dataclass(frozen=True)
class ResourceConfig:
    self_paths: frozenset[str] = frozenset()
    boot_locations: tuple[str, ...] = ()
    com_locations: tuple[str, ...] = ()
    temp_locations: tuple[str, ...] = ()
    drive_natures: tuple[tuple[str, str], ...] = ()
    special_constants: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "self_paths", frozenset(canonical_path(p) for p in self.self_paths))
        for root, kind in self.drive_natures:
            if kind not in ("local", "network", "removable"):
                raise ConfigError(f"drive {root}: unknown nature {kind!r}")
        for group in (self.boot_locations, self.com_locations, self.temp_locations):
            for pat in group:
                for sp in self.self_paths:
                    if glob_match(pat, sp):
                        raise ConfigError(f"pattern {pat!r} overlaps self path {sp!r}")

    @classmethod
    def from_json(cls, data: dict) -> "ResourceConfig":
        if not isinstance(data, dict):
            raise ConfigError("resource config must be a JSON object")
        known = {
            "self_paths", "boot_locations", "com_locations", "temp_locations",
            "drive_natures", "special_constants",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown resource config keys: {sorted(unknown)}")
        try:
            return cls(
                self_paths=frozenset(data.get("self_paths", ())),
                boot_locations=tuple(data.get("boot_locations", ())),
                com_locations=tuple(data.get("com_locations", ())),
                temp_locations=tuple(data.get("temp_locations", ())),
                drive_natures=tuple(
                    (canonical_path(k).rstrip("\\"), v) for k, v in data.get("drive_natures", {}).items()
                ),
                special_constants=tuple(
                    (k.lower(), v) for k, v in data.get("special_constants", {}).items()
                ),
            )
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed resource config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ResourceConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read resource config {path}: {exc}") from exc
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    @classmethod
    def default(cls) -> "ResourceConfig":
        text = resources.files("malgram.data").joinpath("default_resources.json").read_text("utf-8")
        return cls.from_json(json.loads(text))

    def with_self(self, paths: Iterable[str]) -> "ResourceConfig":
        extra = frozenset(canonical_path(p) for p in paths)
        return ResourceConfig(
            self.self_paths | extra,
            self.boot_locations,
            self.com_locations,
            self.temp_locations,
            self.drive_natures,
            self.special_constants,
        )

    def special_role(self, name: str) -> Optional[str]:
        return dict(self.special_constants).get(name.strip().lower())

    def drive_kind(self, path: str) -> Optional[str]:
        m = _DRIVE_RE.match(path)
        if m:
            root = path[:2]
        elif path.startswith("\\\\"):
            root = "\\\\" + path[2:].split("\\", 1)[0]
        else:
            return None
        return dict(self.drive_natures).get(root)


def _nature_of(path: str) -> Optional[Nature]:
    if any(path == p or path.startswith(p + "\\") for p in _REGISTRY_SHORT):
        return Nature.REGISTRY_KEY
    if any(path.startswith(p) for p in _SOCKET_PREFIXES):
        return Nature.SOCKET
    if _MAIL_RE.match(path):
        return Nature.MAIL
    if _DRIVE_RE.match(path) or path.startswith("\\\\") or path.startswith("\\"):
        return Nature.FILE
    if "\\" in path or _FILENAME_RE.match(path):
        return Nature.FILE
    return None


def classify_string(raw: str, cfg: ResourceConfig, ctx: "AnalysisContext | None" = None):
    """Return ``(Nature, ObjectType)`` for a string parameter."""
    path = canonical_path(raw)
    if not path:
        return Nature.OTHER, ObjectType.OBJ_ANY
    if cfg.special_role(raw) == "self":
        return Nature.FILE, ObjectType.THIS
    selves = cfg.self_paths | (ctx.self_paths if ctx else frozenset())
    nature = _nature_of(path)
    if path in selves:
        return nature or Nature.FILE, ObjectType.THIS
    if nature is None:
        return Nature.OTHER, ObjectType.OBJ_ANY
    if any(glob_match(p, path) for p in cfg.boot_locations):
        return nature, ObjectType.OBJ_BOOT
    if nature in (Nature.SOCKET, Nature.MAIL):
        return nature, ObjectType.OBJ_COM
    if any(glob_match(p, path) for p in cfg.com_locations):
        return nature, ObjectType.OBJ_COM
    if nature == Nature.FILE and cfg.drive_kind(path) in ("removable", "network"):
        return nature, ObjectType.OBJ_COM
    if any(glob_match(p, path) for p in cfg.temp_locations):
        return nature, ObjectType.OBJ_TEMP
    return nature, ObjectType.OBJ_PERM


# -- addresses ----------------------------------------------------------------

CRITICAL_REGIONS = frozenset({"import_table", "ssdt", "entry_point"})


@dataclass(frozen=True)
class Region:
    start: int
    size: int
    label: str

    def contains(self, addr: int) -> bool:
        return self.start <= addr < self.start + self.size


def same_variable(addr: int, v: ObjectDescriptor) -> bool:
    if v.span is None:
        raise ValueError("descriptor has no span")
    return v.span.address <= addr <= v.span.address + v.span.size


def classify_address(
    addr: int,
    cfg: ResourceConfig,
    memory_map: Iterable[Region] = (),
    variables: Iterable[ObjectDescriptor] = (),
):
    """Return ``(Nature, ObjectType)`` for an address parameter."""
    for region in memory_map:
        if region.contains(addr) and region.label in CRITICAL_REGIONS:
            return Nature.OTHER, ObjectType.OBJ_BOOT
    for v in variables:
        if v.span is not None and same_variable(addr, v):
            return v.nature, v.otype
    return Nature.VARIABLE, ObjectType.VAR


def refine_descriptor(d: ObjectDescriptor, nature: Nature, otype: ObjectType) -> ObjectDescriptor:
    """Refine the type to the least upper bound; raises Incompatible."""
    new_nature = nature if d.nature == Nature.OTHER and nature is not None else d.nature
    return d.with_type(type_refine(d.otype, otype), new_nature)


@dataclass
class AnalysisContext:
    """Per-run registry: identity allocation, variable spans and extra self paths."""

    cfg: ResourceConfig
    memory_map: list[Region] = field(default_factory=list)
    self_paths: frozenset[str] = frozenset()
    ids: IdAllocator = field(default_factory=IdAllocator)
    var_ids: IdAllocator = field(default_factory=lambda: IdAllocator("v"))
    variables: list[ObjectDescriptor] = field(default_factory=list)

    def add_self(self, path: str) -> None:
        self.self_paths = self.self_paths | {canonical_path(path)}

    def classify(self, raw: str):
        return classify_string(raw, self.cfg, self)

    def describe_string(self, raw: str) -> ObjectDescriptor:
        """Fresh descriptor (new identity) for a named object."""
        nature, otype = self.classify(raw)
        return ObjectDescriptor(self.ids(), nature, otype, canonical_path(raw) or raw)

    def variable_at(self, addr: int, size: int = 0) -> ObjectDescriptor:
        """Descriptor of the variable covering ``addr``, created on first sight."""
        nature, otype = classify_address(addr, self.cfg, self.memory_map, ())
        if otype == ObjectType.OBJ_BOOT:
            return ObjectDescriptor(f"m{addr:#x}", nature, otype, f"{addr:#x}", Span(addr, size))
        for v in self.variables:
            if same_variable(addr, v):
                return v
        v = ObjectDescriptor(self.var_ids(), Nature.VARIABLE, ObjectType.VAR, None, Span(addr, size))
        self.variables.append(v)
        return v

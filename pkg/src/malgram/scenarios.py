"""Deterministic generator of labeled test scenarios (traces and scripts).

Every scenario comes with a sidecar listing the ``(behavior, variant)`` pairs a
correct detector reports for it. Mutants break exactly one semantic rule of a
detectable base scenario and are expected to yield no verdict.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import UnknownScenario
from .trace import Address, Handle, Int, RawCall, Str, parse_trace

SELF_PATHS = (
    r"C:\Users\bob\Downloads\invoice.exe",
    r"C:\Users\alice\Desktop\holiday_photos.exe",
    r"C:\Users\carol\Downloads\setup_crack.exe",
)
PERM_TARGETS = (
    r"C:\Windows\System32\svch0st.exe",
    r"C:\Windows\winupdate.exe",
    r"C:\Program Files\Common Files\msvcsys.exe",
)
P2P_TARGETS = (
    r"C:\Program Files\Kazaa\My Shared Folder\{}.exe",
    r"C:\Program Files\LimeWire\Shared\{}.exe",
    r"C:\Program Files\eMule\Incoming\{}.exe",
)
LURES = ("free_game", "crack_keygen", "screensaver", "mp3_player")
TEMP_TARGETS = (r"C:\Windows\Temp\{}.tmp", r"C:\Temp\{}.dat")
NOISE_FILES = (r"C:\Windows\win32.cfg", r"C:\Users\Public\settings.ini", r"C:\Windows\fonts.dat")
RUN_KEYS = (
    r"HKLM\Software\Microsoft\Windows\CurrentVersion\Run",
    r"HKCU\Software\Microsoft\Windows\CurrentVersion\Run",
)
SOCKET = r"\Device\Afd\Endpoint"
SEND_CODE, RECV_CODE = 0x1201F, 0x12017

SCRIPT_SELF = r"C:\Users\victim\script.vbs"


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    kind: str  # trace | script
    text: str
    expected: tuple[tuple[str, str], ...]

    @property
    def extension(self) -> str:
        return ".trace" if self.kind == "trace" else ".vbs"

    def sidecar(self) -> str:
        data = {
            "scenario": self.name,
            "seed": self.seed,
            "kind": self.kind,
            "expected": [{"behavior": b, "variant": v} for b, v in self.expected],
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def expected_pairs(sidecar_text: str) -> set[tuple[str, str]]:
    return {(d["behavior"], d["variant"]) for d in json.loads(sidecar_text)["expected"]}


# -- trace building ----------------------------------------------------------------


class _Trace:
    def __init__(self, rng: random.Random, self_path: str):
        self.rng = rng
        self.self_path = self_path
        self.calls: list[RawCall] = []
        self._handles = iter(range(0x20, 0x10000, 4 * rng.randint(1, 3)))
        self._buffers = iter(range(0x400000, 0x7F000000, 0x10000))

    def handle(self) -> Handle:
        return Handle(next(self._handles))

    def buffer(self, size: int = 512) -> Address:
        return Address(next(self._buffers), size)

    def call(self, api: str, *args, status: str = "SUCCESS") -> None:
        self.calls.append(RawCall(len(self.calls) + 1, api, tuple(args), status))

    def open(self, path: str, create: bool = False) -> Handle:
        h = self.handle()
        self.call("NtCreateFile" if create else "NtOpenFile", h, Str(path), Int(3))
        return h

    def read(self, h: Handle, buf: Address) -> None:
        self.call("NtReadFile", h, buf, Int(buf.size or 0))

    def write(self, h: Handle, buf: Address) -> None:
        self.call("NtWriteFile", h, buf, Int(buf.size or 0))

    def send(self, h: Handle, buf: Address) -> None:
        self.call("NtDeviceIoControlFile", h, Int(SEND_CODE), buf)

    def compress(self, src: Address, dst: Address) -> None:
        self.call("RtlCompressBuffer", src, dst)

    def close(self, h: Handle) -> None:
        self.call("NtClose", h)

    def noise(self) -> None:
        """An unrelated read of a configuration file."""
        h = self.open(self.rng.choice(NOISE_FILES))
        self.read(h, self.buffer(64))
        self.close(h)

    def text(self) -> str:
        return f"# self: {self.self_path}\n" + "".join(f"{c}\n" for c in self.calls)


def _lure(rng: random.Random, patterns) -> str:
    return rng.choice(patterns).format(rng.choice(LURES))


# -- duplication traces ---------------------------------------------------------------


def _dup_trace(rng, order: str, interleave: int = 0, src: Optional[str] = None,
               split_var: bool = False, target: Optional[str] = None) -> str:
    """``order`` is a word over c (create), o (open self), r (read), w (write)."""
    t = _Trace(rng, rng.choice(SELF_PATHS))
    for _ in range(rng.randint(0, 2)):
        t.noise()
    src = src or t.self_path
    target = target or rng.choice(PERM_TARGETS)
    hs = ht = None
    buf = t.buffer()
    for step in order:
        if step == "c":
            ht = t.open(target, create=True)
        elif step == "o":
            hs = t.open(src)
        elif step == "r":
            t.read(hs, buf)
        elif step == "w":
            t.write(ht, t.buffer() if split_var else buf)
        elif step == "i":
            for _ in range(interleave):
                t.read(hs, buf)
                t.write(ht, t.buffer() if split_var else buf)
    for h in (hs, ht):
        if h is not None:
            t.close(h)
    if rng.random() < 0.5:
        t.noise()
    return t.text()


_DUP_ORDERS = {
    1: ("corw", "create-open-read-write"),
    2: ("ocrw", "open-create-read-write"),
    3: ("orcw", "open-read-create-write"),
    4: ("oci", "open-create-interleaved"),
    5: ("coi", "create-open-interleaved"),
}


def _duplication(variant: int) -> Callable[[random.Random], tuple[str, str, tuple]]:
    def gen(rng):
        if variant == 6:
            return "script", _copy_script(rng), (("Duplication", "direct-copy"),)
        order, label = _DUP_ORDERS[variant]
        text = _dup_trace(rng, order, interleave=rng.randint(2, 4))
        return "trace", text, (("Duplication", label),)

    return gen


# -- propagation traces ------------------------------------------------------------------


def _prop_trace(rng, mode: str, fmt: bool, src: Optional[str] = None,
                split_var: bool = False, target: Optional[str] = None) -> str:
    """``mode`` is ``p2p`` (open, read, copy into a shared folder) or ``socket``
    (read first, then re-open the source, then send)."""
    t = _Trace(rng, rng.choice(SELF_PATHS))
    for _ in range(rng.randint(0, 2)):
        t.noise()
    src = src or t.self_path
    buf = t.buffer()
    if mode == "p2p":
        hs = t.open(src)
        t.read(hs, buf)
    else:
        hs = t.open(src, create=True)
        t.read(hs, buf)
        hs2 = t.open(src)
    out = buf
    if fmt:
        out = t.buffer()
        t.compress(t.buffer() if split_var else buf, out)
    elif split_var:
        out = t.buffer()
    if mode == "p2p":
        ht = t.open(target or _lure(rng, P2P_TARGETS), create=True)
        t.write(ht, out)
    else:
        ht = t.open(target or SOCKET, create=True)
        t.send(ht, out)
    t.close(ht)
    t.close(hs)
    if mode != "p2p":
        t.close(hs2)
    return t.text()


def _propagation(mode: str, fmt: bool):
    label = {"p2p": "open-read", "socket": "read-open"}[mode] + ("-format-write" if fmt else "-write")

    def gen(rng):
        return "trace", _prop_trace(rng, mode, fmt), (("Propagation", label),)

    return gen


# -- residency traces --------------------------------------------------------------------


def _res_trace(rng, create: bool, value: Optional[str] = None) -> str:
    t = _Trace(rng, rng.choice(SELF_PATHS))
    for _ in range(rng.randint(0, 2)):
        t.noise()
    key = rng.choice(RUN_KEYS) + "\\" + rng.choice(("updater", "svchost", "winlogon32"))
    h = t.handle()
    t.call("NtCreateKey" if create else "NtOpenKey", h, Str(key))
    t.call("NtSetValueKey", h, Str(value or t.self_path))
    t.close(h)
    return t.text()


def _residency_of_duplicate(rng) -> str:
    """Duplicate, then register the duplicate (not the original) to start at boot."""
    target = rng.choice(PERM_TARGETS)
    dup = _dup_trace(rng, "ocrw", target=target)
    seq = len(parse_trace(dup).calls)
    key = rng.choice(RUN_KEYS) + "\\updater"
    h = Handle(0xFF00)
    tail = [
        RawCall(seq + 1, "NtOpenKey", (h, Str(key)), "SUCCESS"),
        RawCall(seq + 2, "NtSetValueKey", (h, Str(target)), "SUCCESS"),
        RawCall(seq + 3, "NtClose", (h,), "SUCCESS"),
    ]
    return dup + "".join(f"{c}\n" for c in tail)


def _residency(create: bool):
    label = "create-write" if create else "open-write"

    def gen(rng):
        # the self path written as a value also reads as a direct copy into a
        # boot object, which specializes the permanent type
        return "trace", _res_trace(rng, create), (("Duplication", "direct-copy"), ("Residency", label))

    return gen


# -- scripts ------------------------------------------------------------------------------------


def _vbs(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def _copy_script(rng) -> str:
    target = rng.choice(PERM_TARGETS).replace(".exe", ".vbs")
    return (
        'Set fso = CreateObject("Scripting.FileSystemObject")\n'
        f"fso.CopyFile WScript.ScriptFullName, {_vbs(target)}\n"
    )


def _mail_script(rng) -> str:
    subject = rng.choice(("Important", "Invoice", "Re: your photos"))
    return (
        'Set ol = CreateObject("Outlook.Application")\n'
        "Set m = ol.CreateItem(0)\n"
        f"m.Subject = {_vbs(subject)}\n"
        "m.Attachments.Add WScript.ScriptFullName\n"
        "m.Send\n"
    )


def _overinfection_script(rng, present: bool) -> str:
    target = rng.choice(PERM_TARGETS).replace(".exe", ".vbs")
    cond = "fso.FileExists(t)" if present else "Not fso.FileExists(t)"
    return (
        'Set fso = CreateObject("Scripting.FileSystemObject")\n'
        f"t = {_vbs(target)}\n"
        f"If {cond} Then\n"
        "  fso.CopyFile WScript.ScriptFullName, t\n"
        "End If\n"
    )


def _overinfection(present: bool):
    label = "inverse conditional 2" if present else "conditional 1"

    def gen(rng):
        return "script", _overinfection_script(rng, present), (
            ("Duplication", "direct-copy"),
            ("Overinfection", label),
        )

    return gen


def _benign_logger(rng) -> str:
    log = rng.choice((r"C:\Logs\run.log", r"C:\Users\Public\activity.log"))
    return (
        'Set fso = CreateObject("Scripting.FileSystemObject")\n'
        f"Set lf = fso.OpenTextFile({_vbs(log)}, 8, True)\n"
        'msg = Now & " started " & WScript.ScriptName\n'
        "lf.WriteLine msg\n"
        'lf.WriteLine "full path: " & WScript.ScriptFullName\n'
        "lf.Close\n"
    )


def _benign_editor(rng) -> str:
    doc = rng.choice((r"C:\Users\bob\notes.txt", r"C:\Users\alice\todo.txt"))
    return (
        'Set fso = CreateObject("Scripting.FileSystemObject")\n'
        f"Set f = fso.OpenTextFile({_vbs(doc)})\n"
        "body = f.ReadAll\n"
        "f.Close\n"
        f"Set g = fso.CreateTextFile({_vbs(doc.replace('.txt', '.bak'))})\n"
        "g.Write body\n"
        "g.Close\n"
    )


def _benign_copier(rng) -> str:
    doc = rng.choice((r"C:\Users\bob\report.doc", r"C:\Users\carol\budget.xls"))
    return _dup_trace(rng, "ocrw", src=doc, target=doc + ".bak")


def _benign_installer(rng) -> str:
    return _res_trace(rng, rng.random() < 0.5, value=r"C:\Program Files\Acme\updater.exe")


# -- mutants ------------------------------------------------------------------------------------


def _mut_srctype(base: str):
    other = r"C:\Users\bob\Documents\report.doc"

    def gen(rng):
        if base.startswith("duplication-variant-"):
            order, _ = _DUP_ORDERS[int(base.rsplit("-", 1)[1])]
            return _dup_trace(rng, order, interleave=rng.randint(2, 4), src=other)
        mode, fmt = _PROP_BASES[base]
        return _prop_trace(rng, mode, fmt, src=other)

    return gen


def _mut_varid(base: str):
    def gen(rng):
        if base.startswith("duplication-variant-"):
            order, _ = _DUP_ORDERS[int(base.rsplit("-", 1)[1])]
            return _dup_trace(rng, order, interleave=rng.randint(2, 4), split_var=True)
        mode, fmt = _PROP_BASES[base]
        return _prop_trace(rng, mode, fmt, split_var=True)

    return gen


def _mut_target(base: str):
    def gen(rng):
        mode, fmt = _PROP_BASES[base]
        return _prop_trace(rng, mode, fmt, target=_lure(rng, TEMP_TARGETS))

    return gen


def _mut_boot(base: str):
    create = base == "residency-create-key"

    def gen(rng):
        return _res_trace(rng, create, value=r"C:\Windows\System32\userinit.exe")

    return gen


_PROP_BASES = {
    "propagation-p2p": ("p2p", False),
    "propagation-p2p-format": ("p2p", True),
    "propagation-socket": ("socket", False),
    "propagation-socket-format": ("socket", True),
}

_GENERATORS: dict[str, Callable] = {
    **{f"duplication-variant-{i}": _duplication(i) for i in range(1, 7)},
    "propagation-mail": lambda rng: ("script", _mail_script(rng), (("Propagation", "direct-copy"),)),
    "propagation-p2p": _propagation("p2p", False),
    "propagation-p2p-format": _propagation("p2p", True),
    "propagation-socket": _propagation("socket", False),
    "propagation-socket-format": _propagation("socket", True),
    "residency-runkey": _residency(False),
    "residency-create-key": _residency(True),
    "residency-duplicate": lambda rng: ("trace", _residency_of_duplicate(rng), (
        ("Duplication", "open-create-read-write"), ("Residency", "open-write"))),
    "overinfection-1": _overinfection(False),
    "overinfection-2": _overinfection(True),
    "benign-logger": lambda rng: ("script", _benign_logger(rng), ()),
    "benign-editor": lambda rng: ("script", _benign_editor(rng), ()),
    "benign-copier": lambda rng: ("trace", _benign_copier(rng), ()),
    "benign-installer": lambda rng: ("trace", _benign_installer(rng), ()),
}

MUTATION_SUITES: dict[str, tuple[str, ...]] = {
    "srctype": tuple(f"duplication-variant-{i}" for i in range(1, 6)) + tuple(_PROP_BASES),
    "varid": tuple(f"duplication-variant-{i}" for i in range(1, 6)) + tuple(_PROP_BASES),
    "target-not-com": tuple(_PROP_BASES),
    "boot-value-unbound": ("residency-runkey", "residency-create-key"),
}
_MUTATORS = {"srctype": _mut_srctype, "varid": _mut_varid, "target-not-com": _mut_target,
             "boot-value-unbound": _mut_boot}

for _rule, _bases in MUTATION_SUITES.items():
    for _base in _bases:
        _GENERATORS[f"mutant-{_rule}-{_base}"] = (
            lambda rng, g=_MUTATORS[_rule](_base): ("trace", g(rng), ())
        )

SCENARIO_NAMES: tuple[str, ...] = tuple(n for n in _GENERATORS if not n.startswith("mutant-"))
MUTANT_NAMES: tuple[str, ...] = tuple(n for n in _GENERATORS if n.startswith("mutant-"))


def gen_scenario(name: str, seed: int = 0) -> Scenario:
    gen = _GENERATORS.get(name)
    if gen is None:
        raise UnknownScenario(f"unknown scenario {name!r}")
    kind, text, expected = gen(random.Random(f"{name}:{seed}"))
    return Scenario(name, seed, kind, text, tuple(sorted(set(expected))))


def mutation_suite(rule: str, seed: int = 0) -> list[Scenario]:
    if rule not in MUTATION_SUITES:
        raise UnknownScenario(f"unknown mutation rule {rule!r}")
    return [gen_scenario(f"mutant-{rule}-{b}", seed) for b in MUTATION_SUITES[rule]]

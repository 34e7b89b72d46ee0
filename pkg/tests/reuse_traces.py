"""Random traces that recycle a tiny handle pool across different files."""

from __future__ import annotations

import random

from malgram.model import Nature
from malgram.trace import Address, Handle, Int, RawCall, Str

SELF = r"C:\Users\bob\Downloads\invoice.exe"
PATHS = (
    SELF,
    r"C:\Windows\winupdate.exe",
    r"C:\Windows\System32\svch0st.exe",
    r"C:\Program Files\Kazaa\My Shared Folder\game.exe",
)
HANDLES = (0x10, 0x14, 0x18)


def reuse_trace(rng: random.Random, length: int = 24):
    """Return (trace text, truth) where truth maps call seq to the path the
    handle argument of that call really designates."""
    calls: list[RawCall] = []
    truth: dict[int, str] = {}
    live: dict[int, str] = {}
    buf = Address(0x400000, 512)
    for _ in range(length):
        seq = len(calls) + 1
        free = [h for h in HANDLES if h not in live]
        op = rng.random()
        if free and (not live or op < 0.35):
            h = rng.choice(free)
            path = rng.choice(PATHS)
            api = rng.choice(["NtOpenFile", "NtCreateFile"])
            calls.append(RawCall(seq, api, (Handle(h), Str(path), Int(3)), "SUCCESS"))
            live[h] = path
        elif op < 0.55:
            h = rng.choice(list(live))
            calls.append(RawCall(seq, "NtClose", (Handle(h),), "SUCCESS"))
            del live[h]
            continue
        else:
            h = rng.choice(list(live))
            api = "NtReadFile" if rng.random() < 0.5 else "NtWriteFile"
            calls.append(RawCall(seq, api, (Handle(h), buf, Int(512)), "SUCCESS"))
        truth[seq] = live[h]
    text = f"# self: {SELF}\n" + "".join(f"{c}\n" for c in calls)
    return text, truth


def identity_violations(events, verdicts, truth) -> list[str]:
    """Tokens that stand for two different files, stream-wide or inside a verdict."""
    by_seq = {e.seq: e for e in events}
    problems = []

    def check(seqs, where):
        seen: dict[str, str] = {}
        for s in seqs:
            e = by_seq[s]
            for o in e.objects:
                if o.nature == Nature.VARIABLE or s not in truth:
                    continue
                if seen.setdefault(o.id, truth[s]) != truth[s]:
                    problems.append(f"{where}: {o.id} is {seen[o.id]} and {truth[s]}")

    check([e.seq for e in events], "stream")
    for v in verdicts:
        check(v.events, f"{v.behavior}/{v.variant}")
    return problems

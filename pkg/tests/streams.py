"""Random event streams for the differential tests."""

from __future__ import annotations

import random

from malgram.model import Event, InteractionClass as C, Nature, ObjectDescriptor, ObjectType as T

TYPES = [T.THIS, T.OBJ_PERM, T.VAR, T.OBJ_COM, T.OBJ_BOOT, T.OBJ_TEMP, T.OBJ_ANY]
NATURES = {T.VAR: Nature.VARIABLE, T.OBJ_COM: Nature.SOCKET, T.OBJ_BOOT: Nature.REGISTRY_KEY}
NAMES = [None, "alpha", "beta", "ALPHA"]
BINARY = [C.READ, C.WRITE, C.FORMAT]
UNARY = [C.OPEN, C.CREATE, C.BRANCH]


def universe(rng: random.Random, size: int = 4) -> list[ObjectDescriptor]:
    """Up to ``size`` objects; ``this`` and a variable are usually among them."""
    types = [T.THIS, T.VAR] + [rng.choice(TYPES) for _ in range(size - 2)]
    rng.shuffle(types)
    out = []
    for i, t in enumerate(types[:size]):
        name = None if t == T.VAR else rng.choice(NAMES)
        out.append(ObjectDescriptor(f"o{i + 1}", NATURES.get(t, Nature.FILE), t, name))
    return out


def _event(rng, seq, objs) -> Event:
    if rng.random() < 0.5:
        cls = rng.choice(BINARY)
        pair = (rng.choice(objs), rng.choice(objs))
        return Event(seq, cls, pair, loop=rng.random() < 0.2)
    cls = rng.choice(UNARY)
    value = rng.choice(["absent", "present", "unknown"]) if cls == C.BRANCH else None
    return Event(seq, cls, (rng.choice(objs),), loop=rng.random() < 0.1, value=value)


def random_stream(rng: random.Random, max_len: int = 12, size: int = 4) -> list[Event]:
    objs = universe(rng, rng.randint(2, size))
    return [_event(rng, i, objs) for i in range(rng.randint(1, max_len))]


def lifetime_stream(rng: random.Random, max_len: int = 12, size: int = 4) -> list[Event]:
    """Like ``random_stream`` but objects may be closed or deleted, after which
    they are never mentioned again."""
    objs = universe(rng, rng.randint(2, size))
    alive = list(objs)
    out: list[Event] = []
    for i in range(rng.randint(1, max_len)):
        if len(alive) > 1 and rng.random() < 0.2:
            gone = rng.choice([o for o in alive if o.otype != T.VAR] or alive)
            alive.remove(gone)
            out.append(Event(i, rng.choice([C.CLOSE, C.DELETE]), (gone,)))
        else:
            out.append(_event(rng, i, alive))
    return out


def _fitting(rng, pat, objs):
    """Objects for a terminal pattern, chosen among those whose types fit."""
    chosen = []
    for t in pat.types:
        ok = [o for o in objs if t is None or t.value in _above(o.otype)]
        chosen.append(rng.choice(ok or objs))
    return tuple(chosen)


def _above(t):
    ups = {T.VAR: {"var"}, T.OBJ_TEMP: {"obj_temp"}, T.OBJ_PERM: {"obj_perm"}, T.OBJ_COM: {"obj_com"},
           T.OBJ_BOOT: {"obj_perm", "obj_boot"}, T.THIS: {"obj_perm", "this"}}
    return ups.get(t, set()) | {"obj_any"}


def planted_stream(rng: random.Random, grammars, max_len: int = 12, size: int = 4) -> list[Event]:
    """A random sentence of a random grammar, instantiated over a small object
    universe and interleaved with noise events."""
    from malgram.grammar import sentences

    objs = universe(rng, rng.randint(2, size))
    events = []
    for _ in range(rng.randint(1, 2)):
        g = rng.choice(grammars)
        seq, _prods = rng.choice(sentences(g))
        for name in seq:
            pat = g.terminals[name]
            loop = pat.loop if pat.loop is not None else rng.random() < 0.2
            events.append((pat.cls, _fitting(rng, pat, objs), loop, pat.value))
    while len(events) < max_len and rng.random() < 0.6:
        e = _event(rng, 0, objs)
        events.insert(rng.randint(0, len(events)), (e.cls, e.objects, e.loop, e.value))
    return [Event(i, c, o, loop=l, value=v) for i, (c, o, l, v) in enumerate(events[:max_len])]


def with_closes(rng: random.Random, stream: list[Event]) -> list[Event]:
    """Insert a Close or Delete for some objects somewhere after their last use."""
    events = [(e.cls, e.objects, e.loop, e.value) for e in stream]
    last: dict[str, int] = {}
    objs: dict[str, ObjectDescriptor] = {}
    for i, e in enumerate(stream):
        for o in e.objects:
            last[o.id], objs[o.id] = i, o
    for oid in sorted(last, key=last.get, reverse=True):
        if objs[oid].otype != T.VAR and rng.random() < 0.6:
            at = rng.randint(last[oid] + 1, len(events))
            events.insert(at, (rng.choice([C.CLOSE, C.DELETE]), (objs[oid],), False, None))
    return [Event(i, c, o, loop=l, value=v) for i, (c, o, l, v) in enumerate(events)]

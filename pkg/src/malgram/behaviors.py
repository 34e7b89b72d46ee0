"""Built-in behavior grammars and the behavior catalog.

The duplication grammar keeps the six alternatives of the original model
(five orderings plus direct copy) but is left-factored so that it is LL(1)
over refined terminals: alternatives sharing an ``open`` prefix are split
through the ``Rest`` and ``Body`` nonterminals. Interleaved read/write is the
single read/write body consumed as loop-marked events, so the two differ only
in their ``variant`` lines, which map each consumed terminal sequence back to
its alternative. Terminals accept events with or without a loop mark, which
keeps detection stable under loop compression.

Residency and overinfection are reconstructions: residency requires the value
written into a booting object to designate the program itself or one of its
duplicates; overinfection requires an existence test followed by an explicit
``Branch`` event (only emitted by front-ends that see control flow) whose
value is the state of the tested object inside the taken arm: ``absent``,
``present`` or ``unknown``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import ValidationError
from .grammar import AttributeGrammar, ll1_check
from .grammar_text import dump_grammar, parse_grammar

DUPLICATION = """\
behavior Duplication
start Duplicate
terminal open   = Open(this)
terminal create = Create(obj_perm)
terminal read   = Read(this, var)
terminal write  = Write(var, obj_perm)
terminal copy   = Write(this, obj_perm)

rule Duplicate ::= create open Body
sem <Duplicate>.srcId = <open>.obj1Id
sem <Duplicate>.targId = <create>.obj1Id
sem <create>.obj1Tp = obj_perm
sem <open>.obj1Tp = this
sem <Body>.srcId = <open>.obj1Id
sem <Body>.targId = <create>.obj1Id

rule Duplicate ::= open Rest
sem <Duplicate>.srcId = <open>.obj1Id
sem <Duplicate>.targId = <Rest>.targId
sem <open>.obj1Tp = this
sem <Rest>.srcId = <open>.obj1Id

rule Duplicate ::= copy
sem <Duplicate>.srcId = <copy>.obj1Id
sem <Duplicate>.targId = <copy>.obj2Id
sem <copy>.obj1Tp = this
sem <copy>.obj2Tp = obj_perm

rule Rest ::= create Body
sem <Rest>.targId = <create>.obj1Id
sem <create>.obj1Tp = obj_perm
sem <Body>.srcId = <Rest>.srcId
sem <Body>.targId = <create>.obj1Id

rule Rest ::= read create write
sem <Rest>.targId = <create>.obj1Id
sem <read>.obj1Id = <Rest>.srcId
sem <read>.obj1Tp = this
sem <read>.obj2Tp = var
sem <create>.obj1Tp = obj_perm
sem <write>.obj1Id = <read>.obj2Id
sem <write>.obj1Tp = var
sem <write>.obj2Id = <create>.obj1Id
sem <write>.obj2Tp = obj_perm

rule Body ::= read write
sem <read>.obj1Id = <Body>.srcId
sem <read>.obj1Tp = this
sem <read>.obj2Tp = var
sem <write>.obj1Id = <read>.obj2Id
sem <write>.obj1Tp = var
sem <write>.obj2Id = <Body>.targId
sem <write>.obj2Tp = obj_perm

variant create-open-read-write = create open read write
variant open-create-read-write = open create read write
variant open-read-create-write = open read create write
variant open-create-interleaved = open create read* write*
variant create-open-interleaved = create open read* write*
variant direct-copy = copy
"""

PROPAGATION = """\
behavior Propagation
start Propagate
terminal open   = Open(obj_perm)
terminal read   = Read(obj_perm, var)
terminal format = FormatOp(var, var)
terminal write  = Write(var, obj_com)
terminal copy   = Write(obj_perm, obj_com)

rule Propagate ::= open read Transmit
sem <Propagate>.srcId = <open>.obj1Id
sem <Propagate>.targId = <Transmit>.targId
sem <open>.obj1 = this | fact(Duplication.targId)
sem <read>.obj1Id = <open>.obj1Id
sem <read>.obj2Tp = var
sem <Transmit>.varId = <read>.obj2Id

rule Propagate ::= read open Transmit
sem <Propagate>.srcId = <read>.obj1Id
sem <Propagate>.targId = <Transmit>.targId
sem <read>.obj1 = this | fact(Duplication.targId)
sem <read>.obj2Tp = var
sem <open>.obj1Id = <read>.obj1Id
sem <Transmit>.varId = <read>.obj2Id

rule Propagate ::= copy
sem <Propagate>.srcId = <copy>.obj1Id
sem <Propagate>.targId = <copy>.obj2Id
sem <copy>.obj1 = this | fact(Duplication.targId)
sem <copy>.obj2Tp = obj_com

rule Transmit ::= format write
sem <Transmit>.targId = <write>.obj2Id
sem <format>.obj1Id = <Transmit>.varId
sem <write>.obj1Id = <format>.obj2Id
sem <write>.obj2Tp = obj_com

rule Transmit ::= write
sem <Transmit>.targId = <write>.obj2Id
sem <write>.obj1Id = <Transmit>.varId
sem <write>.obj2Tp = obj_com

variant open-read-format-write = open read format write
variant open-read-write = open read write
variant read-open-format-write = read open format write
variant read-open-write = read open write
variant direct-copy = copy
"""

RESIDENCY = """\
behavior Residency
start Reside
terminal bopen   = Open(obj_boot)
terminal bcreate = Create(obj_boot)
terminal bwrite  = Write(_, obj_boot)

rule Reside ::= bopen bwrite
sem <Reside>.bootId = <bopen>.obj1Id
sem <Reside>.valueId = <bwrite>.obj1Id
sem <bwrite>.obj2Id = <bopen>.obj1Id
sem <bwrite>.obj1 = this | fact(Duplication.targId)

rule Reside ::= bcreate bwrite
sem <Reside>.bootId = <bcreate>.obj1Id
sem <Reside>.valueId = <bwrite>.obj1Id
sem <bwrite>.obj2Id = <bcreate>.obj1Id
sem <bwrite>.obj1 = this | fact(Duplication.targId)

variant open-write = bopen bwrite
variant create-write = bcreate bwrite
"""

OVERINFECTION = """\
behavior Overinfection
start Overinfect
terminal test     = Open(_)
terminal babsent  = Branch(_) value "absent"
terminal bpresent = Branch(_) value "present"
terminal mk       = Create(_)
terminal cp       = Write(this, _)

rule Overinfect ::= test Cond
sem <Overinfect>.objId = <test>.obj1Id
sem <Cond>.objId = <test>.obj1Id

rule Cond ::= babsent Act | bpresent Act
sem <babsent>.obj1Id = <Cond>.objId
sem <bpresent>.obj1Id = <Cond>.objId
sem <Act>.objId = <Cond>.objId

rule Act ::= mk
sem <mk>.obj1Id = <Act>.objId
sem <mk>.obj1 = this | fact(Duplication.targId)

rule Act ::= cp
sem <cp>.obj2Id = <Act>.objId
sem <cp>.obj1Tp = this

variant "conditional 1" = test babsent mk
variant "conditional 1" = test babsent cp
variant "inverse conditional 2" = test bpresent mk
variant "inverse conditional 2" = test bpresent cp
"""

BUILTIN_TEXTS = {
    "Duplication": DUPLICATION,
    "Propagation": PROPAGATION,
    "Residency": RESIDENCY,
    "Overinfection": OVERINFECTION,
}


def load_behavior_file(text: str) -> AttributeGrammar:
    """Parse and validate a behavior definition; raises ValidationError on findings."""
    g = parse_grammar(text)
    findings = ll1_check(g)
    if findings:
        raise ValidationError(findings)
    return g


def duplication_grammar() -> AttributeGrammar:
    return load_behavior_file(DUPLICATION)


def propagation_grammar() -> AttributeGrammar:
    return load_behavior_file(PROPAGATION)


def residency_grammar() -> AttributeGrammar:
    return load_behavior_file(RESIDENCY)


def overinfection_grammar() -> AttributeGrammar:
    return load_behavior_file(OVERINFECTION)


@dataclass
class BehaviorCatalog:
    entries: dict[str, AttributeGrammar] = field(default_factory=dict)

    def add(self, g: AttributeGrammar) -> None:
        if g.name in self.entries:
            raise ValueError(f"behavior {g.name} already in catalog")
        findings = ll1_check(g)
        if findings:
            raise ValidationError(findings)
        self.entries[g.name] = g

    def __getitem__(self, name: str) -> AttributeGrammar:
        return self.entries[name]

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self):
        return len(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def select(self, names: Optional[Iterable[str]]) -> "BehaviorCatalog":
        if names is None:
            return self
        out = BehaviorCatalog()
        for n in names:
            matches = [g for g in self.entries.values() if g.name.lower() == n.lower()]
            if not matches:
                raise KeyError(f"unknown behavior {n!r}")
            out.add(matches[0])
        return out

    def dump(self) -> dict[str, str]:
        return {name: dump_grammar(g) for name, g in self.entries.items()}


def builtin_catalog() -> BehaviorCatalog:
    cat = BehaviorCatalog()
    for text in BUILTIN_TEXTS.values():
        cat.add(load_behavior_file(text))
    return cat

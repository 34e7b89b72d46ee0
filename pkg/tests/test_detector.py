import json

import pytest

from builders import C, SELF, T, V, obj, pairs, stream
from malgram.behaviors import builtin_catalog, duplication_grammar, propagation_grammar
from malgram.detector import Compiled, Engine, detect
from malgram.errors import ConflictError
from malgram.grammar_text import parse_grammar

F1 = obj("f1", T.OBJ_PERM)
F2 = obj("f2", T.OBJ_PERM)
SOCK = obj("sock", T.OBJ_COM)


def targets(report, behavior="Duplication"):
    return {o.token for v in report.verdicts if v.behavior == behavior for a, o in v.objects if a == "targId"}


def test_compile_and_accept():
    Compiled(duplication_grammar())
    r = detect(stream((C.OPEN, SELF), (C.CREATE, F1), (C.READ, SELF, V), (C.WRITE, V, F1)),
               [duplication_grammar()])
    assert pairs(r) == {("Duplication", "open-create-read-write")}


def test_conflicting_grammar_rejected():
    text = ("behavior Bad\nstart S\nterminal a = Read(_, _)\nterminal b = Write(_, _)\n"
            "rule S ::= a b\nrule S ::= a a\n")
    with pytest.raises(ConflictError):
        Compiled(parse_grammar(text))


@pytest.mark.parametrize("written, expected", [(F2, "f2"), (F1, "f1")])
def test_write_target_selects_created_file(written, expected):
    events = stream((C.OPEN, SELF), (C.CREATE, F1), (C.CREATE, F2), (C.READ, SELF, V), (C.WRITE, V, written))
    assert targets(detect(events, [duplication_grammar()])) == {expected}


def test_irrelevant_events_leave_only_roots():
    w = obj("w", T.OBJ_TEMP)
    engine = Engine(builtin_catalog())
    assert engine.run(stream((C.WAIT, w), (C.SIGNAL, w), (C.WAIT, w))) == []
    assert all(len(a.derivations) == 1 for a in engine.automata)
    assert engine.metrics.n_ambiguities == 0
    assert engine.metrics.alpha == 0


def test_dedup_merges_identical_derivations():
    engine = Engine([duplication_grammar()], dedup=True)
    engine.run(stream((C.OPEN, SELF), (C.OPEN, SELF)))
    assert len(engine.automata[0].derivations) == 2  # root plus one


def test_without_dedup_copies_accumulate():
    engine = Engine([duplication_grammar()], dedup=False)
    engine.run(stream((C.OPEN, SELF), (C.OPEN, SELF)))
    assert len(engine.automata[0].derivations) > 2


def test_close_prunes_opened_only_object():
    engine = Engine([duplication_grammar()])
    engine.run(stream((C.OPEN, SELF)))
    assert len(engine.automata[0].derivations) == 2
    engine.feed(stream((C.CLOSE, SELF))[0])
    assert len(engine.automata[0].derivations) == 1


def test_close_after_read_keeps_derivation():
    engine = Engine([duplication_grammar()])
    engine.run(stream((C.OPEN, SELF), (C.READ, SELF, V), (C.CLOSE, SELF)))
    assert ("open", "read") in {d.path for d in engine.automata[0].derivations}


def test_close_of_unknown_object_changes_nothing():
    unknown = obj("u", T.OBJ_TEMP)
    a = Engine([duplication_grammar()])
    a.run(stream((C.OPEN, SELF), (C.CREATE, F1)))
    before = [d.key() for d in a.automata[0].derivations]
    a.feed(stream((C.CLOSE, unknown))[0])
    assert [d.key() for d in a.automata[0].derivations] == before


def _shift(events, by):
    return [e.__class__(e.seq + by, e.cls, e.objects) for e in events]


DUP = stream((C.OPEN, SELF), (C.CREATE, F1), (C.READ, SELF, V), (C.WRITE, V, F1))
V2 = obj("v2", T.VAR)
PROP_FROM_F1 = stream((C.OPEN, F1), (C.READ, F1, V2), (C.WRITE, V2, SOCK))


def test_fact_used_after_publication():
    r = detect(DUP + _shift(PROP_FROM_F1, 4), [duplication_grammar(), propagation_grammar()])
    assert "Propagation" in {v.behavior for v in r.verdicts}


def test_fact_not_visible_before_completion():
    r = detect(_shift(PROP_FROM_F1, 0) + _shift(DUP, 3), [duplication_grammar(), propagation_grammar()])
    assert {v.behavior for v in r.verdicts} == {"Duplication"}


def test_alpha_is_ratio():
    r = detect(DUP + DUP, builtin_catalog())
    m = r.metrics
    assert m.alpha == m.n_ambiguities / max(m.n_events, 1)
    assert detect([], builtin_catalog()).metrics.alpha == 0


def test_alpha_threshold_alert():
    r = detect(DUP, builtin_catalog(), alpha_threshold=-1.0)
    assert r.alpha_alert and r.to_json()["metrics"]["alpha_alert"] is True


def test_report_json_shape():
    doc = json.loads(json.dumps(detect(DUP, builtin_catalog()).to_json()))
    assert set(doc) == {"verdicts", "metrics"}
    v = doc["verdicts"][0]
    assert set(v) == {"behavior", "variant", "events", "objects"}
    assert {"role", "id"} <= set(v["objects"][0])
    assert {"n_events", "alpha", "parse_calls", "max_derivations"} <= set(doc["metrics"])


def test_paths_are_analyzed_separately():
    a = stream((C.OPEN, SELF), (C.CREATE, F1))
    b = stream((C.READ, SELF, V), (C.WRITE, V, F1))
    events = ([e.__class__(e.seq, e.cls, e.objects, path=0) for e in a]
              + [e.__class__(e.seq + 2, e.cls, e.objects, path=1) for e in b])
    assert not detect(events, [duplication_grammar()]).verdicts

import itertools

import pytest
from hypothesis import given, strategies as st

from malgram.behaviors import builtin_catalog
from malgram.errors import ConflictError, GrammarParseError, Incompatible
from malgram.grammar import Ref, build_parse_table, first_sets, ll1_check, partition_variables
from malgram.grammar_text import dump_grammar, parse_grammar
from malgram.model import ObjectType as T, poset_leq, type_refine

# Hasse edges written out independently of the package.
EDGES = {
    ("obj_any", "var"), ("obj_any", "obj_temp"), ("obj_any", "obj_perm"), ("obj_any", "obj_com"),
    ("obj_perm", "obj_boot"), ("obj_perm", "this"),
}
CARRIER = [t.value for t in T]


def closure():
    leq = {(a, a) for a in CARRIER} | set(EDGES)
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in itertools.product(list(leq), list(leq)):
            if b == c and (a, d) not in leq:
                leq.add((a, d))
                changed = True
    return leq


LEQ = closure()


def lub(a, b):
    ups = [c for c in CARRIER if (a, c) in LEQ and (b, c) in LEQ]
    least = [c for c in ups if all((c, u) in LEQ for u in ups)]
    return least[0] if least else None


def test_poset_matches_closure_oracle():
    for a, b in itertools.product(T, T):
        assert poset_leq(a, b) == ((a.value, b.value) in LEQ)


def test_poset_examples():
    assert poset_leq(T.OBJ_PERM, T.OBJ_BOOT)
    assert poset_leq(T.OBJ_BOOT, T.OBJ_BOOT)
    assert not poset_leq(T.OBJ_TEMP, T.OBJ_COM)


def test_poset_laws():
    for a, b, c in itertools.product(T, T, T):
        assert poset_leq(a, a)
        if poset_leq(a, b) and poset_leq(b, a):
            assert a == b
        if poset_leq(a, b) and poset_leq(b, c):
            assert poset_leq(a, c)
    assert all(poset_leq(T.OBJ_ANY, t) for t in T)
    assert [t for t in T if poset_leq(t, T.VAR)] == [T.OBJ_ANY, T.VAR]


def test_type_refine_matches_lub_oracle():
    for a, b in itertools.product(T, T):
        expected = lub(a.value, b.value)
        if expected is None:
            with pytest.raises(Incompatible):
                type_refine(a, b)
        else:
            assert type_refine(a, b).value == expected


def test_type_refine_examples():
    assert type_refine(T.OBJ_ANY, T.OBJ_PERM) == T.OBJ_PERM
    assert type_refine(T.OBJ_PERM, T.OBJ_BOOT) == T.OBJ_BOOT
    with pytest.raises(Incompatible):
        type_refine(T.VAR, T.THIS)


def _refine(a, b):
    try:
        return type_refine(a, b)
    except Incompatible:
        return None


types = st.sampled_from(list(T))


@given(types, types)
def test_type_refine_commutative(a, b):
    assert _refine(a, b) == _refine(b, a)


@given(types)
def test_type_refine_idempotent(a):
    assert type_refine(a, a) == a


@given(types, types, types)
def test_type_refine_associative_where_defined(a, b, c):
    ab, bc = _refine(a, b), _refine(b, c)
    if ab is not None and bc is not None:
        assert _refine(ab, c) == _refine(a, bc)


def _dup():
    return builtin_catalog()["Duplication"]


def test_partition_head_synthesized_is_inner():
    g = _dup()
    inner, _ = partition_variables(g, g.productions[0])
    assert Ref(0, "srcId") in inner


def test_partition_terminal_with_rule_is_inner():
    g = _dup()
    body = next(p for p in g.productions if p.head == "Body")
    inner, outer = partition_variables(g, body)
    assert Ref(1, "obj1Id") in inner
    assert Ref(0, "srcId") in outer


def test_partition_without_attributes_is_empty():
    g = parse_grammar("behavior X\nstart S\nterminal a = Open(_)\nrule S ::= A\nrule A ::= a\n")
    assert partition_variables(g, g.productions[0]) == (set(), set())


@pytest.mark.parametrize("g", list(builtin_catalog()), ids=lambda g: g.name)
def test_builtin_grammars_are_ll1(g):
    assert ll1_check(g) == []


def test_first_first_conflict_reported():
    g = parse_grammar(
        "behavior X\nstart S\nterminal c = Create(obj_perm)\nterminal d = Create(obj_perm)\nrule S ::= c | d\n"
    )
    assert [f.kind for f in ll1_check(g)] == ["first-first"]
    with pytest.raises(ConflictError):
        build_parse_table(g)


def test_right_to_left_dependency_reported():
    g = parse_grammar(
        "behavior X\nstart S\nterminal r = Read(_, var)\nterminal w = Write(var, _)\n"
        "rule S ::= w r\nsem <w>.obj1Id = <r>.obj2Id\n"
    )
    assert [f.kind for f in ll1_check(g)] == ["l-attributed"]


def test_duplicate_alternatives_start_with_distinct_terminals():
    g = _dup()
    first = first_sets(g)
    starts = [g.productions[i].body[0] for i in g.alternatives("Duplicate")]
    patterns = [g.terminals[s] for s in starts]
    assert all(not a.overlaps(b) for a, b in itertools.combinations(patterns, 2))
    assert first["Duplicate"] == {"create", "open", "copy"}


def test_parse_table_entries():
    dup = _dup()
    table = build_parse_table(dup)
    assert dup.productions[table[("Duplicate", "open")]].body == ("open", "Rest")
    prop = builtin_catalog()["Propagation"]
    ptable = build_parse_table(prop)
    assert prop.productions[ptable[("Transmit", "write")]].body == ("write",)
    assert ("Transmit", "open") not in ptable


@pytest.mark.parametrize("g", list(builtin_catalog()), ids=lambda g: g.name)
def test_text_round_trip(g):
    again = parse_grammar(dump_grammar(g))
    assert again.productions == g.productions
    assert again.terminals == g.terminals
    assert again.variants == g.variants


def test_parse_error_carries_line():
    with pytest.raises(GrammarParseError) as exc:
        parse_grammar("behavior X\nstart S\nrule S ::= \n")
    assert "3" in str(exc.value)

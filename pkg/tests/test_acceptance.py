"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import json
import random
import time

import pytest

from conftest import CORPUS
from oracle import detector_keys, oracle
from reuse_traces import identity_violations, reuse_trace
from streams import lifetime_stream, planted_stream, random_stream, with_closes
from malgram.cli import RunConfig, analyze, events_for, main
from malgram.detector import detect
from malgram.grammar_text import parse_grammar
from malgram.model import Event, InteractionClass as C, Nature, ObjectDescriptor, ObjectType as T
from malgram.scenarios import MUTATION_SUITES, expected_pairs, gen_scenario, mutation_suite
from malgram.script import normalize_text


def corpus_items(root=CORPUS):
    return sorted(p for p in root.rglob("*") if p.is_file() and not p.name.endswith(".expected.json"))


def sidecar(path):
    return path.with_name(path.stem + ".expected.json")


REQUIRED_VARIANTS = {
    ("Duplication", v) for v in (
        "create-open-read-write", "open-create-read-write", "open-read-create-write",
        "open-create-interleaved", "create-open-interleaved", "direct-copy",
    )
} | {
    ("Propagation", v) for v in (
        "open-read-write", "open-read-format-write", "read-open-write", "read-open-format-write",
    )
} | {("Residency", "open-write"), ("Residency", "create-write"),
     ("Overinfection", "conditional 1"), ("Overinfection", "inverse conditional 2")}


def test_variant_coverage(resources, api_catalog, behaviors, verdict_line):
    start = time.perf_counter()
    misses, seen = [], set()
    for path in corpus_items():
        if path.parent != CORPUS:
            continue
        report, _ = analyze(RunConfig(input=path))
        got = {(v.behavior, v.variant) for v in report.verdicts}
        want = expected_pairs(sidecar(path).read_text("utf-8"))
        seen |= got
        if got != want:
            misses.append(f"{path.name}: got {sorted(got)} want {sorted(want)}")
    elapsed = time.perf_counter() - start
    missing = REQUIRED_VARIANTS - seen
    ok = not misses and not missing and elapsed < 5
    verdict_line("variant coverage", ok, f"{len(misses)} misses, {len(missing)} variants unseen, {elapsed:.2f}s")
    assert not misses, misses
    assert not missing, missing
    assert elapsed < 5


def test_semantic_rule_mutants(resources, api_catalog, behaviors, verdict_line):
    false_pos = []
    for rule in MUTATION_SUITES:
        for seed in range(3):
            for s in mutation_suite(rule, seed):
                events = events_for(s.text, s.kind, resources, api_catalog)
                if detect(events, behaviors).verdicts:
                    false_pos.append(f"{s.name}@{seed}")
    verdict_line("semantic-rule mutants", not false_pos, f"{len(MUTATION_SUITES)} suites, {len(false_pos)} false positives")
    assert not false_pos


def test_oracle_equivalence(behaviors, verdict_line):
    grammars = list(behaviors)
    start = time.perf_counter()
    diffs, hits = [], 0
    for k in range(10_000):
        rng = random.Random(k)
        stream = planted_stream(rng, grammars) if k % 2 else random_stream(rng)
        want = oracle(stream, grammars)
        hits += bool(want)
        if detector_keys(detect(stream, grammars)) != want:
            diffs.append(k)
    elapsed = time.perf_counter() - start
    ok = not diffs and elapsed < 60
    verdict_line("oracle equivalence", ok, f"10000 streams, {hits} with verdicts, {len(diffs)} differ, {elapsed:.1f}s")
    assert not diffs, diffs[:10]
    assert elapsed < 60


def _chain(i):
    return parse_grammar(
        f"behavior Chain{i}\nstart S\nterminal a = Read(_, _)\nterminal b = Write(_, _)\n"
        "rule S ::= a A\nrule A ::= a A | b\n"
    )


def test_parse_call_counts(verdict_line):
    wrong = []
    for k in (1, 2, 4):
        grammars = [_chain(i) for i in range(k)]
        for n in range(1, 13):
            worst = detect([Event(j, C.READ) for j in range(n)], grammars, dedup=False).metrics
            flat = detect([Event(j, C.SIGNAL) for j in range(n)], grammars, dedup=False).metrics
            if worst.parse_calls != k * (2 ** n - 1) or flat.parse_calls != k * n:
                wrong.append((k, n, worst.parse_calls, flat.parse_calls))
    verdict_line("parse-call counts", not wrong, "k(2^n-1) worst case and k*n flat, n <= 12")
    assert not wrong


def test_stack_bounds(verdict_line):
    parse = sem = 0
    for path in corpus_items():
        report, _ = analyze(RunConfig(input=path))
        parse = max(parse, report.metrics.max_parse_stack)
        sem = max(sem, report.metrics.max_sem_stack)
    ok = parse <= 7 and sem <= 3
    verdict_line("stack bounds", ok, f"parse {parse} <= 7, semantic {sem} <= 3")
    assert ok


def _ambiguity_stream(n_creates, target):
    this = ObjectDescriptor("self", Nature.FILE, T.THIS, "self.exe")
    var = ObjectDescriptor("buf", Nature.VARIABLE, T.VAR)
    files = [ObjectDescriptor(f"f{i}", Nature.FILE, T.OBJ_PERM, f"f{i}.exe") for i in range(1, n_creates + 1)]
    events = [Event(0, C.OPEN, (this,))]
    events += [Event(i, C.CREATE, (f,)) for i, f in enumerate(files, 1)]
    events += [Event(n_creates + 1, C.READ, (this, var)), Event(n_creates + 2, C.WRITE, (var, files[target - 1]))]
    return events


def test_ambiguity_target(behaviors, verdict_line):
    n_creates = 8
    failures = []
    for i in range(1, n_creates + 1):
        stream = _ambiguity_stream(n_creates, i)
        report = detect(stream, behaviors)
        targets = {o.token for v in report.verdicts if v.behavior == "Duplication" for a, o in v.objects if a == "targId"}
        if targets != {f"f{i}"} or report.metrics.max_derivations >= 2 ** len(stream):
            failures.append((i, targets, report.metrics.max_derivations))
    verdict_line("ambiguity target", not failures, f"N = {n_creates}")
    assert not failures


def test_verdict_preservation(behaviors, verdict_line):
    grammars = list(behaviors)
    changed = []
    for k in range(1000):
        rng = random.Random(f"keep:{k}")
        stream = with_closes(rng, planted_stream(rng, grammars)) if k % 2 else lifetime_stream(rng)
        ref = detector_keys(detect(stream, grammars, dedup=False, prune=False))
        for dedup in (False, True):
            for prune in (False, True):
                if detector_keys(detect(stream, grammars, dedup=dedup, prune=prune)) != ref:
                    changed.append((k, dedup, prune))
    verdict_line("verdict preservation", not changed, f"1000 streams, {len(changed)} changed")
    assert not changed


def test_fig8_normalization(verdict_line):
    line = ('execute "set QAI5NPN1 =T228IV93." & Chr(65) & Chr(116) & Chr(116) & Chr(97) & Chr(99)'
            ' & Chr(104) & Chr(109) & Chr(101) & Chr(110) & Chr(116) & Chr(115)')
    out = normalize_text(line)
    ok = out == 'execute "set QAI5NPN1 =T228IV93.Attachments"'
    verdict_line("chr-concat normalization", ok, repr(out))
    assert ok


def test_handle_reuse(resources, api_catalog, behaviors, verdict_line):
    bad = []
    for k in range(1000):
        text, truth = reuse_trace(random.Random(k))
        events = events_for(text, "trace", resources, api_catalog)
        problems = identity_violations(events, detect(events, behaviors).verdicts, truth)
        if problems:
            bad.append((k, problems[0]))
    verdict_line("handle reuse", not bad, f"1000 traces, {len(bad)} violations")
    assert not bad


@pytest.mark.parametrize("name", ["benign-logger", "benign-installer"])
def test_false_positive_regressions(name, resources, api_catalog, behaviors, verdict_line):
    s = gen_scenario(name, 0)
    verdicts = detect(events_for(s.text, s.kind, resources, api_catalog), behaviors).verdicts
    verdict_line(f"no false positive on {name}", not verdicts, f"{len(verdicts)} verdicts")
    assert not verdicts


def test_emit_events_round_trip(tmp_path, verdict_line):
    differ = []
    for path in corpus_items():
        direct, events, replayed = tmp_path / "a.json", tmp_path / "e.jsonl", tmp_path / "b.json"
        main(["--input", str(path), "--out", str(direct), "--emit-events", str(events)])
        main(["--input", str(events), "--kind", "events", "--out", str(replayed)])
        a = json.dumps(json.loads(direct.read_text())["verdicts"], sort_keys=True)
        b = json.dumps(json.loads(replayed.read_text())["verdicts"], sort_keys=True)
        if a != b:
            differ.append(path.name)
    verdict_line("events round trip", not differ, f"{len(corpus_items())} items, {len(differ)} differ")
    assert not differ


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

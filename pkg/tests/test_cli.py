import json

import pytest

from malgram.cli import EXIT_CLEAN, EXIT_DETECTED, EXIT_ERROR, main
from malgram.scenarios import SCENARIO_NAMES, gen_scenario


def _write(tmp_path, name, seed=0):
    s = gen_scenario(name, seed)
    path = tmp_path / f"{name}{s.extension}"
    path.write_text(s.text, "utf-8")
    return path


def test_detection_exit_code_and_report(tmp_path, capsys):
    path = _write(tmp_path, "duplication-variant-1")
    assert main(["--input", str(path)]) == EXIT_DETECTED
    doc = json.loads(capsys.readouterr().out)
    assert any(v["behavior"] == "Duplication" for v in doc["verdicts"])


def test_clean_exit_code(tmp_path, capsys):
    assert main(["--input", str(_write(tmp_path, "benign-logger"))]) == EXIT_CLEAN
    assert json.loads(capsys.readouterr().out)["verdicts"] == []


def test_missing_input_is_error(tmp_path):
    assert main(["--input", str(tmp_path / "absent.trace")]) == EXIT_ERROR


def test_unknown_extension_needs_kind(tmp_path):
    src = _write(tmp_path, "duplication-variant-1")
    odd = src.rename(tmp_path / "sample.dat")
    assert main(["--input", str(odd)]) == EXIT_ERROR
    assert main(["--input", str(odd), "--kind", "trace"]) == EXIT_DETECTED


def test_out_file_and_behavior_selection(tmp_path):
    path = _write(tmp_path, "duplication-variant-1")
    out = tmp_path / "r.json"
    assert main(["--input", str(path), "--behaviors", "Residency", "--out", str(out)]) == EXIT_CLEAN
    assert json.loads(out.read_text())["verdicts"] == []


def test_config_dir_from_environment(tmp_path, monkeypatch):
    conf = tmp_path / "conf"
    conf.mkdir()
    (conf / "catalog.json").write_text("[]")
    path = _write(tmp_path, "duplication-variant-1")
    monkeypatch.setenv("BA_CONFIG_DIR", str(conf))
    assert main(["--input", str(path)]) == EXIT_CLEAN


def test_alpha_threshold_in_report(tmp_path, capsys):
    path = _write(tmp_path, "duplication-variant-1")
    main(["--input", str(path), "--alpha-threshold", "0.5"])
    metrics = json.loads(capsys.readouterr().out)["metrics"]
    assert metrics["alpha_threshold"] == 0.5 and "alpha_alert" in metrics


def test_emit_events(tmp_path):
    path = _write(tmp_path, "duplication-variant-1")
    events = tmp_path / "e.jsonl"
    main(["--input", str(path), "--emit-events", str(events), "--out", str(tmp_path / "r.json")])
    assert events.read_text().strip()


def test_gen_list(capsys):
    assert main(["gen", "list"]) == EXIT_CLEAN
    listed = capsys.readouterr().out.split()
    assert set(SCENARIO_NAMES) <= set(listed)


def test_gen_all_writes_sidecars(tmp_path):
    assert main(["gen", "all", "--out-dir", str(tmp_path)]) == EXIT_CLEAN
    for name in SCENARIO_NAMES:
        assert (tmp_path / f"{name}.expected.json").is_file()


def test_gen_unknown_scenario():
    assert main(["gen", "nope"]) == EXIT_ERROR


def test_gen_several_without_out_dir():
    assert main(["gen", "all"]) == EXIT_ERROR


def test_gen_single_to_stdout(capsys):
    assert main(["gen", "benign-logger", "--seed", "2"]) == EXIT_CLEAN
    assert capsys.readouterr().out == gen_scenario("benign-logger", 2).text


@pytest.mark.parametrize("name", [n for n in SCENARIO_NAMES if not n.startswith("benign-")][:4])
def test_generated_scenarios_detected(tmp_path, name, capsys):
    assert main(["--input", str(_write(tmp_path, name))]) == EXIT_DETECTED

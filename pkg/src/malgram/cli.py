"""Command-line driver: front-end, detection and report writing, plus the
scenario generator.

Exit status: 0 when no behavior was detected, 1 when verdicts are present and
2 on any configuration, input or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .apimap import ApiCatalog, default_catalog, load_catalog_file
from .behaviors import BehaviorCatalog, builtin_catalog, load_behavior_file
from .classifier import ResourceConfig
from .detector import DetectionReport, detect
from .errors import MalgramError
from .model import Event, dump_events, load_events
from .scenarios import MUTANT_NAMES, SCENARIO_NAMES, gen_scenario
from .script import script_to_events
from .script.interp import DEFAULT_PATH_CAP, DEFAULT_SELF
from .trace import trace_to_events

log = logging.getLogger("malgram")

EXIT_CLEAN, EXIT_DETECTED, EXIT_ERROR = 0, 1, 2
KINDS = ("trace", "script", "events")
_EXTENSIONS = {
    ".trace": "trace", ".log": "trace", ".txt": "trace",
    ".vbs": "script", ".vbe": "script", ".bas": "script",
    ".jsonl": "events", ".events": "events", ".ndjson": "events",
}
CONFIG_ENV = "BA_CONFIG_DIR"


@dataclass
class RunConfig:
    input: Path
    kind: Optional[str] = None
    behaviors: Optional[list[str]] = None  # None selects every behavior
    resources: Optional[Path] = None
    catalog: Optional[Path] = None
    out: Optional[Path] = None
    alpha_threshold: Optional[float] = None
    no_dedup: bool = False
    no_prune: bool = False
    emit_events: Optional[Path] = None
    self_path: Optional[str] = None
    path_cap: int = DEFAULT_PATH_CAP

    def resolved_kind(self) -> str:
        if self.kind:
            return self.kind
        kind = _EXTENSIONS.get(self.input.suffix.lower())
        if kind is None:
            raise MalgramError(f"cannot infer input kind from {self.input.name!r}; pass --kind")
        return kind


def _config_file(explicit: Optional[Path], name: str) -> Optional[Path]:
    if explicit is not None:
        return explicit
    base = os.environ.get(CONFIG_ENV)
    if base and (Path(base) / name).is_file():
        return Path(base) / name
    return None


def load_resources(path: Optional[Path]) -> ResourceConfig:
    path = _config_file(path, "resources.json")
    return ResourceConfig.load(path) if path else ResourceConfig.default()


def load_api_catalog(path: Optional[Path]) -> ApiCatalog:
    path = _config_file(path, "catalog.json")
    return load_catalog_file(path) if path else default_catalog()


def load_behaviors(selection: Optional[Sequence[str]]) -> BehaviorCatalog:
    builtin = builtin_catalog()
    if not selection or [s.lower() for s in selection] == ["all"]:
        return builtin
    out = BehaviorCatalog()
    names = []
    for item in selection:
        p = Path(item)
        if p.suffix and p.is_file():
            out.add(load_behavior_file(p.read_text("utf-8")))
        else:
            names.append(item)
    for g in builtin.select(names):
        out.add(g)
    return out


def events_for(
    text: str,
    kind: str,
    cfg: ResourceConfig,
    catalog: ApiCatalog,
    self_path: Optional[str] = None,
    path_cap: int = DEFAULT_PATH_CAP,
) -> list[Event]:
    if kind == "trace":
        if self_path:
            cfg = cfg.with_self([self_path])
        return trace_to_events(text, cfg, catalog)
    if kind == "script":
        return script_to_events(text, cfg, catalog, self_path or DEFAULT_SELF, path_cap)
    if kind == "events":
        return list(load_events(text))
    raise MalgramError(f"unknown input kind {kind!r}")


def analyze(cfg: RunConfig) -> tuple[DetectionReport, list[Event]]:
    if not cfg.input.is_file():
        raise MalgramError(f"input file not found: {cfg.input}")
    resources = load_resources(cfg.resources)
    catalog = load_api_catalog(cfg.catalog)
    behaviors = load_behaviors(cfg.behaviors)
    events = events_for(cfg.input.read_text("utf-8"), cfg.resolved_kind(), resources, catalog,
                        cfg.self_path, cfg.path_cap)
    report = detect(events, behaviors, dedup=not cfg.no_dedup, prune=not cfg.no_prune,
                    alpha_threshold=cfg.alpha_threshold)
    return report, events


def report_text(report: DetectionReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


def run(cfg: RunConfig) -> int:
    try:
        report, events = analyze(cfg)
        if cfg.emit_events is not None:
            cfg.emit_events.write_text(dump_events(events), "utf-8")
        text = report_text(report)
        if cfg.out is None:
            sys.stdout.write(text)
        else:
            cfg.out.write_text(text, "utf-8")
    except (MalgramError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_DETECTED if report.verdicts else EXIT_CLEAN


def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malgram", description="Detect malicious behaviors in traces and scripts.")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--behaviors", default="all",
                   help="comma-separated behavior names or grammar files, or 'all'")
    p.add_argument("--resources", type=Path)
    p.add_argument("--catalog", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--alpha-threshold", type=float)
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--emit-events", type=Path)
    p.add_argument("--self-path", help="path of the analyzed program or script")
    p.add_argument("--path-cap", type=int, default=DEFAULT_PATH_CAP)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _gen_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malgram gen", description="Generate labeled test scenarios.")
    p.add_argument("scenario", help="scenario name, 'all', 'mutants' or 'list'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, help="write scenario files and sidecars here")
    return p


def _gen(argv: Sequence[str]) -> int:
    args = _gen_parser().parse_args(argv)
    if args.scenario == "list":
        print("\n".join(SCENARIO_NAMES + MUTANT_NAMES))
        return EXIT_CLEAN
    names = {"all": SCENARIO_NAMES, "mutants": MUTANT_NAMES}.get(args.scenario, (args.scenario,))
    try:
        scenarios = [gen_scenario(n, args.seed) for n in names]
    except MalgramError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out_dir is None:
        if len(scenarios) != 1:
            print("error: --out-dir is required for several scenarios", file=sys.stderr)
            return EXIT_ERROR
        sys.stdout.write(scenarios[0].text)
        return EXIT_CLEAN
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for s in scenarios:
        (args.out_dir / f"{s.name}{s.extension}").write_text(s.text, "utf-8")
        (args.out_dir / f"{s.name}.expected.json").write_text(s.sidecar(), "utf-8")
    return EXIT_CLEAN


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "gen":
        return _gen(argv[1:])
    args = _run_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    behaviors = None if args.behaviors.strip().lower() == "all" else [
        b.strip() for b in args.behaviors.split(",") if b.strip()
    ]
    cfg = RunConfig(
        input=args.input, kind=args.kind, behaviors=behaviors, resources=args.resources,
        catalog=args.catalog, out=args.out, alpha_threshold=args.alpha_threshold,
        no_dedup=args.no_dedup, no_prune=args.no_prune, emit_events=args.emit_events,
        self_path=args.self_path, path_cap=args.path_cap,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

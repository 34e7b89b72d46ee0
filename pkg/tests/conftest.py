from pathlib import Path

import pytest

from malgram.apimap import default_catalog
from malgram.behaviors import builtin_catalog
from malgram.classifier import ResourceConfig

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@pytest.fixture(scope="session")
def resources():
    return ResourceConfig.default()


@pytest.fixture(scope="session")
def api_catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def behaviors():
    return builtin_catalog()


@pytest.fixture
def verdict_line(capsys):
    """Print one PASS/FAIL line for an acceptance criterion, outside capture."""

    def emit(name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    return emit

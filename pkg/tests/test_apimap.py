import json
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from malgram.apimap import default_catalog, load_catalog, map_call
from malgram.errors import CatalogError
from malgram.model import InteractionClass as C
from malgram.trace import Address, Handle, Int

SEND, RECV = 0x1201F, 0x12017


@pytest.fixture(scope="module")
def cat():
    return default_catalog()


def test_afd_recv_is_read(cat):
    m = map_call("NtDeviceIoControlFile", [Handle(8), Int(RECV), Address(0x1000, 10)], cat)
    assert m.cls == C.READ
    assert m.role("source") == Handle(8)


def test_afd_send_is_write(cat):
    m = map_call("NtDeviceIoControlFile", [Handle(8), Int(SEND), Address(0x1000, 10)], cat)
    assert m.cls == C.WRITE
    assert m.role("target") == Handle(8)


def test_unlisted_api_is_ignored(cat):
    assert map_call("NtQueryPerformanceCounter", [Int(1)], cat) is None


def test_other_ioctl_without_default_is_ignored(cat):
    assert map_call("NtDeviceIoControlFile", [Handle(8), Int(0x999)], cat) is None


def test_shipped_catalog_counts():
    raw = json.loads(resources.files("malgram.data").joinpath("default_catalog.json").read_text("utf-8"))
    assert sum(e["api"] == "NtDeviceIoControlFile" for e in raw) >= 2
    assert len(default_catalog()) == len(raw)


def test_read_write_entries_have_one_source_and_target(cat):
    for entry in cat.entries:
        if entry.cls in (C.READ, C.WRITE, C.FORMAT):
            assert entry.source_role() is not None and entry.target_role() is not None, entry.api


def _entry(api="X", cls="Open", when=None):
    e = {"api": api, "class": cls, "roles": [{"param": 0, "role": "subject"}]}
    if when is not None:
        e["when"] = when
    return e


def test_two_defaults_rejected():
    with pytest.raises(CatalogError):
        load_catalog(json.dumps([_entry(), _entry(cls="Close")]))


def test_overlapping_discriminators_rejected():
    when = [{"param": 1, "equals": "7"}]
    with pytest.raises(CatalogError):
        load_catalog(json.dumps([_entry(when=when), _entry(cls="Close", when=when)]))


def test_empty_catalog_maps_nothing():
    cat = load_catalog("[]")
    assert len(cat) == 0
    assert map_call("NtOpenFile", [Handle(4)], cat) is None


def test_bad_role_rejected():
    bad = _entry()
    bad["roles"][0]["role"] = "victim"
    with pytest.raises(CatalogError):
        load_catalog(json.dumps([bad]))


SHADOW = load_catalog(json.dumps([
    _entry(api="Io", cls="Open"),
    _entry(api="Io", cls="Close", when=[{"param": 1, "equals": 5}]),
]))


@given(st.integers(0, 10))
def test_discriminator_shadows_default_exactly_on_match(code):
    m = map_call("Io", [Handle(4), Int(code)], SHADOW)
    assert m.cls == (C.CLOSE if code == 5 else C.OPEN)


@given(st.text(max_size=12), st.lists(st.integers(), max_size=3))
def test_map_call_total_and_deterministic(name, params):
    cat = default_catalog()
    assert map_call(name, params, cat) == map_call(name, params, cat)

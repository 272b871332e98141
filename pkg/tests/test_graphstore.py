import pytest
from hypothesis import given, strategies as st

from chainkit.graphstore import (
    CREATED,
    EmptyComponent,
    GraphStore,
    Perm,
    STORED_IN,
    Triple,
    hexa_key,
    query_pattern,
)

import oracles

component = st.binary(min_size=1, max_size=4)
triples = st.builds(Triple, component, component, component)


def test_six_keys_per_triple():
    g = GraphStore()
    assert g.insert(Triple(b"a", b"p", b"b"))
    assert not g.insert(Triple(b"a", b"p", b"b"))
    assert len(g) == 6 and g.triple_count == 1
    g.remove(Triple(b"a", b"p", b"b"))
    assert len(g) == 0


def test_empty_component_rejected():
    with pytest.raises(EmptyComponent):
        Triple(b"", b"p", b"o")


def test_separator_bytes_do_not_confuse_prefixes():
    g = GraphStore()
    g.insert(Triple(b"a\x00b", b"p", b"c"))
    g.insert(Triple(b"a", b"p", b"\x00b"))
    assert g.query(s=b"a") == [Triple(b"a", b"p", b"\x00b")]
    assert g.query(s=b"a\x00b") == [Triple(b"a\x00b", b"p", b"c")]


def test_contains_uses_stored_in():
    g = GraphStore()
    g.insert(Triple(b"alice", CREATED, b"h1"))
    assert not g.contains(b"h1")
    g.insert(Triple(b"h1", STORED_IN, b"4"))
    assert g.contains(b"h1")


def test_bound_query_touches_only_matches():
    g = GraphStore()
    for i in range(50):
        g.insert(Triple(b"s%d" % i, b"p", b"o"))
    assert len(g.query(s=b"s7")) == 1
    assert g.last_scan == 1


def test_snapshot_roundtrip(tmp_path):
    g = GraphStore()
    g.insert(Triple(b"\x01\x00", b"p", b"o"))
    g.insert(Triple(b"x", b"y", b"z"))
    g.save(tmp_path / "g.hexa")
    assert GraphStore.load(tmp_path / "g.hexa").triples() == g.triples()


def test_truncated_snapshot_rejected():
    g = GraphStore()
    g.insert(Triple(b"x", b"y", b"z"))
    data = g.to_bytes()
    # drop the last key record entirely
    n = int.from_bytes(data[:8], "big")
    with pytest.raises(ValueError):
        GraphStore.from_bytes(data[: len(data) - (8 + n)])


@given(triples)
def test_key_roundtrip(t):
    from chainkit.graphstore import _key_to_triple

    for perm in Perm:
        assert _key_to_triple(hexa_key(perm, t)) == t


@given(st.lists(triples, max_size=30), triples)
def test_queries_match_shadow(ts, probe):
    g = GraphStore()
    for t in ts:
        g.insert(t)
    plain = [(t.subject, t.predicate, t.object) for t in ts]
    for mask in range(8):
        s = probe.subject if mask & 1 else None
        p = probe.predicate if mask & 2 else None
        o = probe.object if mask & 4 else None
        got = sorted((t.subject, t.predicate, t.object) for t in query_pattern(g, s, p, o))
        assert got == oracles.shadow_query(plain, s, p, o)

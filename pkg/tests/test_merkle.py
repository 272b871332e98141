import hashlib

import pytest
from hypothesis import given, strategies as st

from chainkit.encoding import canonical_encode
from chainkit.merkle import (
    IndexOutOfRange,
    UnknownRoot,
    build_tree,
    compute_root_set,
    leaf_hash,
    prove_inclusion,
    tree_from_leaves,
    verify_proof,
)
from chainkit.model import ChainConfig, Gender, HashAlg, RootDef, RootInstance

import oracles

CFG = ChainConfig("M", roots=(RootDef("a"), RootDef("b")))


def H(b):
    return hashlib.sha256(b).digest()


def leaves(payloads):
    return [leaf_hash(CFG, p) for p in payloads]


def test_three_leaf_tree_by_hand():
    a, b, c = (H(b"\x00" + x) for x in (b"a", b"b", b"c"))
    expected = H(b"\x01" + H(b"\x01" + a + b) + H(b"\x01" + c + c))
    assert tree_from_leaves(CFG, leaves([b"a", b"b", b"c"])).root == expected


def test_empty_and_single():
    assert tree_from_leaves(CFG, []).root == bytes(32)
    assert tree_from_leaves(CFG, leaves([b"x"])).root == H(b"\x00x")


def test_sha3_config_changes_root():
    sha3 = ChainConfig("M", hash_alg=HashAlg.SHA3_256)
    assert tree_from_leaves(sha3, [leaf_hash(sha3, b"x")]).root == hashlib.sha3_256(b"\x00x").digest()


def test_build_tree_hashes_encoded_instances():
    gs = [RootInstance("a", Gender.FEMALE, value=v) for v in range(5)]
    assert build_tree(CFG, gs).root == oracles.merkle_root([canonical_encode(g) for g in gs])


def test_root_set_follows_declaration_order():
    g = RootInstance("b", Gender.FEMALE)
    entries = compute_root_set(CFG, {"b": [g]})
    assert [e.root_name for e in entries] == ["a", "b"]
    assert entries[0].commitment == bytes(32) and entries[0].instance_count == 0
    assert entries[1].instance_count == 1
    with pytest.raises(UnknownRoot):
        compute_root_set(CFG, {"zzz": [g]})


def test_proof_index_out_of_range():
    tree = tree_from_leaves(CFG, leaves([b"a"]))
    with pytest.raises(IndexOutOfRange):
        prove_inclusion(tree, 1)


@given(st.lists(st.binary(max_size=12), min_size=1, max_size=40))
def test_root_matches_oracle(payloads):
    assert tree_from_leaves(CFG, leaves(payloads)).root == oracles.merkle_root(payloads)


@given(st.lists(st.binary(max_size=12), min_size=1, max_size=40), st.data())
def test_every_proof_verifies(payloads, data):
    tree = tree_from_leaves(CFG, leaves(payloads))
    i = data.draw(st.integers(min_value=0, max_value=len(payloads) - 1))
    proof = prove_inclusion(tree, i)
    assert verify_proof(CFG, proof)
    assert len(proof.path) == tree.height

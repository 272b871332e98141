import dataclasses

import pytest
from hypothesis import given, strategies as st

from chainkit.encoding import DecodeError, UnencodableType, canonical_encode, decode, encode_int
from chainkit.hashing import HashAlg, ZERO_HASH, digest
from chainkit.model import Access, Block, ChainConfig, Gender, RootDef, RootInstance, RootSetEntry, UtxoOutput

i64 = st.integers(min_value=-(2**63), max_value=2**63 - 1)


def test_known_digests():
    assert digest(HashAlg.SHA256, b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert digest(HashAlg.SHA3_256, b"").hex() == "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
    assert ZERO_HASH == bytes(32)


def test_int_layout():
    assert encode_int(1) == b"\x00" * 7 + b"\x01"
    assert encode_int(-1) == b"\xff" * 8
    assert canonical_encode(256) == bytes.fromhex("0000000000000100")
    with pytest.raises(UnencodableType):
        encode_int(2**63)


def test_length_prefixes():
    assert canonical_encode(b"ab") == bytes.fromhex("0000000000000002") + b"ab"
    assert canonical_encode("é") == bytes.fromhex("0000000000000002") + "é".encode()
    assert canonical_encode([1, 2]) == bytes.fromhex("0000000000000002") + encode_int(1) + encode_int(2)


def test_dict_order_does_not_matter():
    assert canonical_encode({"b": 1, "a": 2}) == canonical_encode({"a": 2, "b": 1})


def test_optional_is_a_count():
    with_partner = RootInstance("r", Gender.MALE, partner_hash=b"\x01" * 32)
    without = RootInstance("r", Gender.MALE)
    assert len(canonical_encode(with_partner)) - len(canonical_encode(without)) == 8 + 32


def test_unencodable():
    with pytest.raises(UnencodableType):
        canonical_encode(1.5)
    with pytest.raises(UnencodableType):
        canonical_encode(object())


def test_decode_rejects_trailing_and_truncated():
    data = canonical_encode(UtxoOutput("bob", 3))
    assert decode(data, UtxoOutput) == UtxoOutput("bob", 3)
    with pytest.raises(DecodeError):
        decode(data + b"\x00", UtxoOutput)
    with pytest.raises(DecodeError):
        decode(data[:-1], UtxoOutput)


def test_block_roundtrip():
    g = RootInstance("coin", Gender.FEMALE, access=Access.PRIVATE, aspect_writes={"x": 4}, value=7)
    b = Block(3, b"\x11" * 32, 9, (RootSetEntry("coin", b"\x22" * 32, 1),), {"coin": (g,)}, nonce=b"n", creator="m")
    assert decode(canonical_encode(b), Block) == b


def test_config_roundtrip():
    cfg = ChainConfig("X", roots=(RootDef("a"), RootDef("b", multi_invoke=True)), opcode_table={"INC": ("PUSH 1", "ADD")})
    assert decode(canonical_encode(cfg), ChainConfig) == cfg


instances = st.builds(
    RootInstance,
    root_name=st.text(min_size=1, max_size=8),
    gender=st.sampled_from(Gender),
    access=st.sampled_from(Access),
    code=st.binary(max_size=16),
    aspect_writes=st.dictionaries(st.text(max_size=4), i64, max_size=3),
    partner_hash=st.none() | st.binary(min_size=32, max_size=32),
    sender=st.text(max_size=6),
    value=i64,
    params=st.binary(max_size=16),
)


@given(instances)
def test_instance_roundtrip(g):
    assert decode(canonical_encode(g), RootInstance) == g


@given(instances, instances)
def test_encoding_is_injective(a, b):
    if a != b:
        assert canonical_encode(a) != canonical_encode(b)


@given(st.lists(i64), st.lists(st.binary(max_size=5)))
def test_containers_roundtrip(ints, blobs):
    assert decode(canonical_encode(ints), list[int]) == ints
    assert decode(canonical_encode(blobs), list[bytes]) == blobs


def test_dataclass_fields_in_declaration_order():
    out = UtxoOutput("a", 1)
    assert canonical_encode(out) == canonical_encode("a") + canonical_encode(1)
    assert [f.name for f in dataclasses.fields(UtxoOutput)] == ["owner", "amount"]

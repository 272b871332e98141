"""Hexastore: every (subject, predicate, object) triple is stored under all
six orderings of its components so any partially bound pattern is answered
by one contiguous prefix scan of a sorted key space.

Key layout: ``tag || esc(first) || 0x00 || esc(second) || 0x00 || esc(third)``.
Escaping maps ``0x00 -> 0x01 0x01`` and ``0x01 -> 0x01 0x02`` so component
bytes never contain the separator and key order equals component order.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from sortedcontainers import SortedList

from .encoding import canonical_encode
from .hashing import HashAlg, digest

__all__ = [
    "Perm",
    "Triple",
    "EmptyComponent",
    "GraphStore",
    "TARGETED",
    "CREATED",
    "STORED_IN",
    "MINED",
    "hexa_key",
    "ingest_block",
    "insert_triple",
    "query_pattern",
    "search_contains",
    "block_triples",
]

TARGETED = b"Targeted"
CREATED = b"Created"
STORED_IN = b"StoredIn"
MINED = b"Mined"

SEP = b"\x00"


class EmptyComponent(ValueError):
    pass


class Perm(enum.IntEnum):
    SPO = 0
    SOP = 1
    OPS = 2
    OSP = 3
    PSO = 4
    POS = 5


# positions (0=s, 1=p, 2=o) in key order for each permutation
_ORDER = {
    Perm.SPO: (0, 1, 2),
    Perm.SOP: (0, 2, 1),
    Perm.OPS: (2, 1, 0),
    Perm.OSP: (2, 0, 1),
    Perm.PSO: (1, 0, 2),
    Perm.POS: (1, 2, 0),
}

# bound positions -> permutation whose key prefix covers exactly them
_ROUTE = {
    frozenset(): Perm.SPO,
    frozenset({0}): Perm.SPO,
    frozenset({1}): Perm.PSO,
    frozenset({2}): Perm.OPS,
    frozenset({0, 1}): Perm.SPO,
    frozenset({0, 2}): Perm.SOP,
    frozenset({1, 2}): Perm.POS,
    frozenset({0, 1, 2}): Perm.SPO,
}


@dataclass(frozen=True, order=True)
class Triple:
    subject: bytes
    predicate: bytes
    object: bytes

    def __post_init__(self):
        for part in (self.subject, self.predicate, self.object):
            if not part:
                raise EmptyComponent("triple components must be non-empty")

    def __getitem__(self, i: int) -> bytes:
        return (self.subject, self.predicate, self.object)[i]


def _escape(component: bytes) -> bytes:
    return component.replace(b"\x01", b"\x01\x02").replace(b"\x00", b"\x01\x01")


def _unescape(component: bytes) -> bytes:
    out = bytearray()
    i = 0
    while i < len(component):
        b = component[i]
        if b == 1:
            out.append(component[i + 1] - 1)
            i += 2
        else:
            out.append(b)
            i += 1
    return bytes(out)


def hexa_key(perm: Perm, t: Triple) -> bytes:
    a, b, c = (_escape(t[i]) for i in _ORDER[perm])
    return bytes([perm]) + a + SEP + b + SEP + c


def _prefix(perm: Perm, parts: list[bytes]) -> bytes:
    # a trailing separator keeps bound components from matching longer ones
    return bytes([perm]) + b"".join(_escape(p) + SEP for p in parts)


def _key_to_triple(key: bytes) -> Triple:
    perm = Perm(key[0])
    parts = [_unescape(p) for p in key[1:].split(SEP)]
    spo: list[bytes] = [b"", b"", b""]
    for pos, part in zip(_ORDER[perm], parts):
        spo[pos] = part
    return Triple(*spo)


def _as_bytes(x) -> bytes:
    if x is None or isinstance(x, bytes):
        return x
    return str(x).encode("utf-8")


class GraphStore:
    """In-memory hexastore over a sorted key list."""

    def __init__(self):
        self.index: SortedList = SortedList()
        self._keys: set[bytes] = set()
        # number of keys visited by the most recent query (instrumentation)
        self.last_scan = 0

    def __len__(self) -> int:
        return len(self.index)

    @property
    def triple_count(self) -> int:
        return len(self.index) // 6

    def __contains__(self, t: Triple) -> bool:
        return hexa_key(Perm.SPO, t) in self._keys

    def insert(self, t: Triple) -> bool:
        """Insert *t* under all six keys; returns False if already present."""
        if t in self:
            return False
        for perm in Perm:
            k = hexa_key(perm, t)
            self.index.add(k)
            self._keys.add(k)
        return True

    def remove(self, t: Triple) -> None:
        if t not in self:
            return
        for perm in Perm:
            k = hexa_key(perm, t)
            self.index.remove(k)
            self._keys.discard(k)

    def scan(self, perm: Perm, bound: list[bytes]) -> Iterator[Triple]:
        """Triples whose *perm*-ordered prefix equals *bound*, in key order."""
        self.last_scan = 0
        if len(bound) == 3:
            key = bytes([perm]) + SEP.join(_escape(p) for p in bound)
            if key in self._keys:
                self.last_scan = 1
                yield _key_to_triple(key)
            return
        prefix = _prefix(perm, bound) if bound else bytes([perm])
        start = self.index.bisect_left(prefix)
        for key in self.index.islice(start):
            if not key.startswith(prefix):
                break
            self.last_scan += 1
            yield _key_to_triple(key)

    def query(self, s=None, p=None, o=None) -> list[Triple]:
        """All triples matching the pattern; ``None`` is a wildcard."""
        pattern = (_as_bytes(s), _as_bytes(p), _as_bytes(o))
        bound_pos = frozenset(i for i, v in enumerate(pattern) if v is not None)
        perm = _ROUTE[bound_pos]
        bound = [pattern[i] for i in _ORDER[perm] if i in bound_pos]
        return list(self.scan(perm, bound))

    def contains(self, item_hash: bytes) -> bool:
        """True iff *item_hash* is the subject of a ``StoredIn`` triple."""
        for _ in self.scan(Perm.SPO, [item_hash, STORED_IN]):
            return True
        return False

    def triples(self) -> list[Triple]:
        return self.query()

    def copy(self) -> "GraphStore":
        g = GraphStore()
        g.index = SortedList(self.index)
        g._keys = set(self._keys)
        return g

    # -- snapshot files ---------------------------------------------------

    def to_bytes(self) -> bytes:
        return b"".join(struct.pack(">Q", len(k)) + k for k in self.index)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GraphStore":
        g = cls()
        pos = 0
        keys = []
        while pos < len(data):
            (n,) = struct.unpack(">Q", data[pos : pos + 8])
            keys.append(data[pos + 8 : pos + 8 + n])
            pos += 8 + n
        for k in keys:
            if k[0] == Perm.SPO:
                g.insert(_key_to_triple(k))
        if len(g.index) != len(keys):
            raise ValueError("snapshot is not a complete hexastore")
        return g

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "GraphStore":
        return cls.from_bytes(Path(path).read_bytes())


# free-function aliases matching the operation names used elsewhere


def insert_triple(store: GraphStore, t: Triple) -> GraphStore:
    store.insert(t)
    return store


def query_pattern(store: GraphStore, s=None, p=None, o=None) -> list[Triple]:
    return store.query(s, p, o)


def search_contains(store: GraphStore, item_hash: bytes) -> bool:
    return store.contains(item_hash)


def block_triples(block, miner: str, instance_hash, extra_created=()) -> list[Triple]:
    """Triples describing *block*; ``instance_hash`` maps an instance to H(γ).

    ``extra_created`` holds ``(creator, hash)`` pairs for instances the block
    produced implicitly (UTXO change outputs, rewards).
    """
    height = str(block.height).encode()
    out = []
    for name in block.instances:
        for g in block.instances[name]:
            h = instance_hash(g)
            if g.sender:
                out.append(Triple(g.sender.encode(), CREATED, h))
            if g.partner_hash is not None and g.sender:
                out.append(Triple(g.sender.encode(), TARGETED, g.partner_hash))
            out.append(Triple(h, STORED_IN, height))
    for creator, h in extra_created:
        if creator:
            out.append(Triple(creator.encode(), CREATED, h))
        out.append(Triple(h, STORED_IN, height))
    if miner:
        out.append(Triple(miner.encode(), MINED, height))
    return out


def ingest_block(store: GraphStore, block, miner: str, config=None, extra_created=()) -> GraphStore:
    """Insert the Created/Targeted/StoredIn/Mined triples for *block*."""
    alg = config.hash_alg if config is not None else HashAlg.SHA256
    for t in block_triples(block, miner, lambda g: digest(alg, canonical_encode(g)), extra_created):
        store.insert(t)
    return store

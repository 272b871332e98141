"""Binary Merkle trees over root instances, root-set commitments and proofs.

Leaves are ``H(0x00 || payload)`` and interior nodes ``H(0x01 || left ||
right)``; an odd node at any level is paired with itself.  The empty tree
commits to the all-zero digest.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .encoding import canonical_encode
from .hashing import ZERO_HASH, hash_digest
from .model import ChainConfig, RootInstance, RootSetEntry

__all__ = [
    "Side",
    "ProofStep",
    "InclusionProof",
    "MerkleTree",
    "UnknownRoot",
    "IndexOutOfRange",
    "leaf_hash",
    "node_hash",
    "build_tree",
    "tree_from_leaves",
    "compute_root_set",
    "prove_inclusion",
    "verify_proof",
]

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


class UnknownRoot(KeyError):
    pass


class IndexOutOfRange(IndexError):
    pass


class Side(enum.IntEnum):
    """Which side of the running hash the sibling sits on."""

    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class ProofStep:
    sibling: bytes
    side: Side


@dataclass(frozen=True)
class InclusionProof:
    leaf: bytes
    path: tuple[ProofStep, ...]
    expected_root: bytes


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[bytes, ...]
    levels: tuple[tuple[bytes, ...], ...]

    @property
    def root(self) -> bytes:
        if not self.leaves:
            return ZERO_HASH
        return self.levels[-1][0]

    @property
    def height(self) -> int:
        return max(len(self.levels) - 1, 0)


def leaf_hash(config: ChainConfig, payload: bytes) -> bytes:
    return hash_digest(config, LEAF_PREFIX + payload)


def node_hash(config: ChainConfig, left: bytes, right: bytes) -> bytes:
    return hash_digest(config, NODE_PREFIX + left + right)


def tree_from_leaves(config: ChainConfig, leaves: Iterable[bytes]) -> MerkleTree:
    """Build a tree whose bottom level is the given (already hashed) leaves."""
    level = tuple(leaves)
    if not level:
        return MerkleTree((), ())
    levels = [level]
    while len(level) > 1:
        if len(level) % 2:
            level = level + (level[-1],)
        level = tuple(node_hash(config, level[i], level[i + 1]) for i in range(0, len(level), 2))
        levels.append(level)
    return MerkleTree(levels[0], tuple(levels))


def build_tree(config: ChainConfig, instances: Sequence[RootInstance]) -> MerkleTree:
    return tree_from_leaves(config, (leaf_hash(config, canonical_encode(g)) for g in instances))


def compute_root_set(
    config: ChainConfig, grouped: Mapping[str, Sequence[RootInstance]]
) -> tuple[RootSetEntry, ...]:
    """One commitment per declared root, in declaration order."""
    declared = {r.name for r in config.roots}
    for name in grouped:
        if name not in declared:
            raise UnknownRoot(name)
    entries = []
    for root in config.roots:
        instances = grouped.get(root.name, ())
        entries.append(RootSetEntry(root.name, build_tree(config, instances).root, len(instances)))
    return tuple(entries)


def prove_inclusion(tree: MerkleTree, index: int) -> InclusionProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexOutOfRange(f"leaf index {index} outside [0, {len(tree.leaves)})")
    path = []
    i = index
    for level in tree.levels[:-1]:
        if i % 2:
            path.append(ProofStep(level[i - 1], Side.LEFT))
        else:
            sibling = level[i + 1] if i + 1 < len(level) else level[i]
            path.append(ProofStep(sibling, Side.RIGHT))
        i //= 2
    return InclusionProof(tree.leaves[index], tuple(path), tree.root)


def verify_proof(config: ChainConfig, proof: InclusionProof) -> bool:
    acc = proof.leaf
    for step in proof.path:
        if step.side == Side.LEFT:
            acc = node_hash(config, step.sibling, acc)
        else:
            acc = node_hash(config, acc, step.sibling)
    return acc == proof.expected_root

"""Plain data types shared by every layer.

Configuration objects, root instances, blocks and world state live here so
that the encoding, hashing, ledger and simulator modules can all depend on
them without depending on each other.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .hashing import ZERO_HASH, HashAlg

__all__ = [
    "HashAlg",
    "ChainType",
    "InstanceType",
    "Access",
    "Gender",
    "Status",
    "AspectDef",
    "RootDef",
    "MechanismRef",
    "ChainConfig",
    "RootInstance",
    "UtxoOutput",
    "RootSetEntry",
    "Block",
    "AccountState",
    "WorldState",
    "CHAIN_HOOKS",
]

AccountId = str

CHAIN_HOOKS = frozenset({"OnCreate", "OnNewBlock", "OnNewPeer", "OnBlockReceived", "OnPeerMessage"})


class ChainType(enum.IntEnum):
    UTXO = 0
    ACCOUNT = 1


class InstanceType(enum.IntEnum):
    FEMALE_ONLY = 0
    MALE_ONLY = 1
    BOTH = 2


class Access(enum.IntEnum):
    PUBLIC = 0
    PRIVATE = 1


class Gender(enum.IntEnum):
    FEMALE = 0
    MALE = 1


class Status(enum.IntEnum):
    OK = 0
    ERROR = 1


@dataclass(frozen=True)
class AspectDef:
    name: str
    description: str = ""
    default_value: int = 0
    mutable: bool = True


@dataclass(frozen=True)
class RootDef:
    name: str
    instance_type: InstanceType = InstanceType.BOTH
    access: Access = Access.PUBLIC
    aspects: tuple[AspectDef, ...] = ()
    code_template: str = "*"
    # account of the root's controller; only consulted for PRIVATE roots
    controller: str = ""
    # account chains only: allow more than one male to invoke a female
    multi_invoke: bool = False

    def permits(self, gender: Gender) -> bool:
        if self.instance_type == InstanceType.BOTH:
            return True
        if self.instance_type == InstanceType.FEMALE_ONLY:
            return gender == Gender.FEMALE
        return gender == Gender.MALE

    def aspect(self, name: str) -> AspectDef | None:
        for a in self.aspects:
            if a.name == name:
                return a
        return None


@dataclass(frozen=True)
class MechanismRef:
    """A named mechanism: a built-in consensus kind or a user mechanism.

    ``hooks`` maps hook names (``Execute``, ``OnPeerMessage`` ...) to VM
    bytecode compiled from the chain-definition language.
    """

    name: str
    kind: str = "POW"
    difficulty: int = 0
    hooks: dict[str, bytes] = field(default_factory=dict)


@dataclass(frozen=True)
class ChainConfig:
    chain_name: str
    chain_type: ChainType = ChainType.UTXO
    hash_alg: HashAlg = HashAlg.SHA256
    consensus: MechanismRef = field(default_factory=lambda: MechanismRef("POW"))
    roots: tuple[RootDef, ...] = ()
    opcode_table: dict[str, tuple[str, ...]] = field(default_factory=dict)
    compute_budget: int = 1000
    block_reward: int = 0
    chain_functions: dict[str, bytes] = field(default_factory=dict)
    mechanisms: tuple[MechanismRef, ...] = ()

    def root(self, name: str) -> RootDef | None:
        for r in self.roots:
            if r.name == name:
                return r
        return None


@dataclass(frozen=True)
class RootInstance:
    """A root instance: the generalised transaction."""

    root_name: str
    gender: Gender
    access: Access = Access.PUBLIC
    code: bytes = b""
    return_spec: bytes = b""
    aspect_writes: dict[str, int] = field(default_factory=dict)
    partner_hash: bytes | None = None
    sender: AccountId = ""
    originator: AccountId = ""
    value: int = 0
    params: bytes = b""
    signature: bytes = b"sig"


@dataclass(frozen=True)
class UtxoOutput:
    """One output requested by a spending male on a UTXO chain."""

    owner: AccountId
    amount: int


@dataclass(frozen=True)
class RootSetEntry:
    root_name: str
    commitment: bytes
    instance_count: int


@dataclass(frozen=True)
class Block:
    height: int
    predecessor_hash: bytes
    timestamp: int
    root_set: tuple[RootSetEntry, ...]
    instances: dict[str, tuple[RootInstance, ...]]
    nonce: bytes = b""
    creator: AccountId = ""
    predecessor_version_hash: bytes | None = None
    # canonical encoding of the ChainConfig; only non-empty in genesis
    config_blob: bytes = b""

    def all_instances(self, order: tuple[str, ...] | None = None) -> list[RootInstance]:
        names = order if order is not None else tuple(sorted(self.instances))
        out: list[RootInstance] = []
        for name in names:
            out.extend(self.instances.get(name, ()))
        return out


@dataclass(frozen=True)
class BlockHeader:
    height: int
    predecessor_hash: bytes
    timestamp: int
    root_set: tuple[RootSetEntry, ...]
    creator: AccountId
    predecessor_version_hash: bytes | None
    config_blob: bytes


@dataclass(frozen=True)
class AccountState:
    balance: int = 0
    stored_code: bytes | None = None
    storage_root: bytes = ZERO_HASH


@dataclass
class WorldState:
    chain_type: ChainType
    accounts: dict[str, AccountState] = field(default_factory=dict)
    utxo_set: dict[bytes, RootInstance] = field(default_factory=dict)
    aspects: dict[tuple[str, str], int] = field(default_factory=dict)
    # account chains: female instances by hash (their bodies live in accounts)
    contracts: dict[bytes, RootInstance] = field(default_factory=dict)
    # females already invoked by a male
    paired: dict[bytes, bytes] = field(default_factory=dict)
    # per-male execution logs (instance-level receipts)
    receipts: dict[bytes, bytes] = field(default_factory=dict)
    # nomination-style rewards when block_reward is zero
    privileges: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "WorldState":
        return WorldState(
            self.chain_type,
            dict(self.accounts),
            dict(self.utxo_set),
            dict(self.aspects),
            dict(self.contracts),
            dict(self.paired),
            dict(self.receipts),
            dict(self.privileges),
        )

    def utxo_total(self) -> int:
        return sum(f.value for f in self.utxo_set.values())

"""Toolkit for designing, running and inspecting simulated blockchains."""
from .core import Chain, InvalidConfig, create_chain, instance_hash, block_hash, load_config, save_config
from .hashing import HashAlg, digest
from .ledger import apply_block, mine_next_block, replay
from .model import (
    Access,
    AspectDef,
    Block,
    ChainConfig,
    ChainType,
    Gender,
    InstanceType,
    MechanismRef,
    RootDef,
    RootInstance,
    UtxoOutput,
    WorldState,
)

__version__ = "0.1.0"

__all__ = [
    "Access",
    "AspectDef",
    "Block",
    "Chain",
    "ChainConfig",
    "ChainType",
    "Gender",
    "HashAlg",
    "InstanceType",
    "InvalidConfig",
    "MechanismRef",
    "RootDef",
    "RootInstance",
    "UtxoOutput",
    "WorldState",
    "apply_block",
    "block_hash",
    "create_chain",
    "digest",
    "instance_hash",
    "load_config",
    "mine_next_block",
    "replay",
    "save_config",
]

"""Chain configuration, validation and genesis construction.

A chain is fully determined by its :class:`~chainkit.model.ChainConfig`:
consensus (actor layer), chain type, roots and hash algorithm (blockchain
layer) and the opcode table plus compute budget (VM layer).
:func:`create_chain` turns a validated configuration into a chain holding a
single genesis block that embeds the encoded configuration.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import vm
from .encoding import canonical_encode, decode
from .graphstore import GraphStore
from .hashing import ZERO_HASH, HashAlg, hash_digest
from .merkle import compute_root_set
from .model import (
    CHAIN_HOOKS,
    Block,
    BlockHeader,
    ChainConfig,
    ChainType,
    RootInstance,
    WorldState,
)

__all__ = [
    "CONSENSUS_KINDS",
    "InvalidConfig",
    "Violation",
    "CodeTemplate",
    "Chain",
    "canonical_encode",
    "hash_digest",
    "validate_config",
    "create_chain",
    "parse_template",
    "template_matches",
    "block_header",
    "block_hash",
    "seal_binder",
    "genesis_state",
    "instance_hash",
    "save_config",
    "load_config",
    "decode_config",
]

CONSENSUS_KINDS = frozenset({"POW", "NOMINATION"})

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_NO_MACRO = {"SKIP", "SKIPZ", "RET"}


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


class InvalidConfig(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


# -- code templates ----------------------------------------------------------


@dataclass(frozen=True)
class CodeTemplate:
    """Admission rule for instance code.

    ``allowed`` of None admits every opcode; ``max_len`` of None admits any
    instruction count.  ``empty_only`` admits only empty code.
    """

    allowed: frozenset[str] | None = None
    max_len: int | None = None
    empty_only: bool = False


def parse_template(text: str, opcode_table: Mapping[str, Sequence[str]] | None = None) -> CodeTemplate:
    """Parse ``"*"``, ``""`` or ``"ops=PUSH,ADD;max=8"`` style templates."""
    text = text.strip()
    if text == "*":
        return CodeTemplate()
    if text == "":
        return CodeTemplate(empty_only=True)
    known = vm.BASE_OPS | set(opcode_table or {})
    allowed = None
    max_len = None
    for clause in text.split(";"):
        key, sep, value = clause.strip().partition("=")
        if not sep:
            raise ValueError(f"template clause {clause!r} is not key=value")
        if key == "ops":
            names = frozenset(v.strip() for v in value.split(",") if v.strip())
            unknown = names - known
            if unknown:
                raise ValueError(f"template names unknown opcodes {sorted(unknown)}")
            allowed = names
        elif key == "max":
            max_len = int(value)
            if max_len < 0:
                raise ValueError("template max must be non-negative")
        else:
            raise ValueError(f"unknown template clause {key!r}")
    return CodeTemplate(allowed, max_len)


def template_matches(template: CodeTemplate, code: bytes, opcode_table: Mapping[str, Sequence[str]] | None = None) -> bool:
    if template.empty_only:
        return code == b""
    try:
        instructions = _all_instructions(code, opcode_table)
    except vm.VMError:
        return False
    if template.max_len is not None and len(instructions) > template.max_len:
        return False
    if template.allowed is not None:
        names = {b: n for n, b in vm.custom_opcode_bytes(opcode_table or {}).items()}
        for ins in instructions:
            name = names.get(ins.op) if ins.op >= vm.CUSTOM_BASE else vm.Op(ins.op).name
            if name not in template.allowed:
                return False
    return True


def _all_instructions(code: bytes, opcode_table) -> list:
    """Instructions of *code* and of any body it returns, checked statically."""
    out = []
    while True:
        part = vm.static_check(code, opcode_table)
        out.extend(part)
        if part and part[-1].op == vm.Op.RET:
            code = code[part[-1].offset + 1 :]
            continue
        return out


# -- validation ----------------------------------------------------------------


def validate_config(config: ChainConfig) -> list[Violation]:
    """Every broken invariant of *config*; empty when the config is valid."""
    out: list[Violation] = []
    if not _IDENT.match(config.chain_name or ""):
        out.append(Violation("chain_name", "must be a non-empty identifier"))
    if not isinstance(config.chain_type, ChainType):
        out.append(Violation("chain_type", "unknown chain type"))
    if not isinstance(config.hash_alg, HashAlg):
        out.append(Violation("hash_alg", "unsupported hash algorithm"))
    if config.compute_budget < 1:
        out.append(Violation("compute_budget", "must be >= 1"))
    if config.block_reward < 0:
        out.append(Violation("block_reward", "must be non-negative"))
    if config.consensus.kind not in CONSENSUS_KINDS:
        out.append(Violation("consensus", f"unknown consensus kind {config.consensus.kind!r}"))
    if not 0 <= config.consensus.difficulty <= 64:
        out.append(Violation("consensus", "difficulty must lie in [0, 64]"))

    seen: set[str] = set()
    for i, root in enumerate(config.roots):
        where = f"roots[{i}]"
        if not root.name:
            out.append(Violation(where, "root name must be non-empty"))
        elif root.name in seen:
            out.append(Violation(where, f"duplicate root name {root.name!r}"))
        seen.add(root.name)
        aspect_names: set[str] = set()
        for a in root.aspects:
            if not a.name:
                out.append(Violation(f"{where}.aspects", "aspect name must be non-empty"))
            elif a.name in aspect_names:
                out.append(Violation(f"{where}.aspects", f"duplicate aspect name {a.name!r}"))
            aspect_names.add(a.name)
        try:
            parse_template(root.code_template, config.opcode_table)
        except ValueError as exc:
            out.append(Violation(f"{where}.code_template", f"malformed template: {exc}"))

    for name, expansion in config.opcode_table.items():
        where = f"opcode_table[{name}]"
        if name in vm.BASE_OPS:
            out.append(Violation(where, "custom opcode shadows a base opcode"))
            continue
        if not expansion:
            out.append(Violation(where, "empty expansion"))
        for step in expansion:
            head = step.split()[0] if step.split() else ""
            if head in config.opcode_table:
                out.append(Violation(where, "custom-opcode recursion"))
            elif head in _NO_MACRO:
                out.append(Violation(where, f"control flow opcode {head} not allowed in a custom opcode"))
            elif head not in vm.BASE_OPS:
                out.append(Violation(where, f"unknown base opcode {head!r}"))
            else:
                try:
                    vm.assemble(step)
                except (vm.VMError, ValueError) as exc:
                    out.append(Violation(where, f"bad step {step!r}: {exc}"))

    for hook, code in config.chain_functions.items():
        if hook not in CHAIN_HOOKS:
            out.append(Violation("chain_functions", f"unknown hook {hook!r}"))
        out.extend(_check_code(f"chain_functions[{hook}]", code, config))
    mech_names: set[str] = set()
    for m in config.mechanisms:
        if m.name in mech_names:
            out.append(Violation("mechanisms", f"duplicate mechanism {m.name!r}"))
        mech_names.add(m.name)
        for hook, code in m.hooks.items():
            out.extend(_check_code(f"mechanisms[{m.name}].{hook}", code, config))
    return out


def _check_code(where: str, code: bytes, config: ChainConfig) -> list[Violation]:
    try:
        vm.static_check(code, _safe_table(config))
    except (vm.VMError, ValueError) as exc:
        return [Violation(where, f"bytecode rejected: {exc}")]
    return []


def _safe_table(config: ChainConfig) -> dict:
    return {k: v for k, v in config.opcode_table.items() if k not in vm.BASE_OPS}


# -- blocks ------------------------------------------------------------------


def instance_hash(config: ChainConfig, g: RootInstance) -> bytes:
    return hash_digest(config, canonical_encode(g))


def block_header(block: Block) -> BlockHeader:
    return BlockHeader(
        block.height,
        block.predecessor_hash,
        block.timestamp,
        block.root_set,
        block.creator,
        block.predecessor_version_hash,
        block.config_blob,
    )


def seal_binder(block: Block) -> bytes:
    """Header bytes a proof-of-work nonce must commit to (nonce excluded)."""
    return canonical_encode(block_header(block))


def block_hash(config: ChainConfig, block: Block) -> bytes:
    return hash_digest(config, seal_binder(block) + canonical_encode(block.nonce))


def genesis_state(config: ChainConfig) -> WorldState:
    state = WorldState(config.chain_type)
    for root in config.roots:
        for a in root.aspects:
            state.aspects[(root.name, a.name)] = a.default_value
    return state


@dataclass
class Chain:
    """A chain as seen by one node: blocks plus the derived state and graph."""

    config: ChainConfig
    blocks: list[Block]
    world: WorldState
    graph: GraphStore = field(default_factory=GraphStore)
    pending: list[RootInstance] = field(default_factory=list)
    hook_logs: list[tuple[str, list]] = field(default_factory=list)

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.height

    @property
    def head_hash(self) -> bytes:
        return block_hash(self.config, self.head)

    def hashes(self) -> list[bytes]:
        return [block_hash(self.config, b) for b in self.blocks]


def make_genesis(config: ChainConfig, predecessor_version_hash: bytes | None = None) -> Block:
    return Block(
        height=0,
        predecessor_hash=ZERO_HASH,
        timestamp=0,
        root_set=compute_root_set(config, {}),
        instances={},
        nonce=b"",
        creator="",
        predecessor_version_hash=predecessor_version_hash,
        config_blob=canonical_encode(config),
    )


def run_hook(config: ChainConfig, code: bytes, env: Mapping | None = None, aspects=None) -> vm.VMResult:
    return vm.run(
        code,
        budget=config.compute_budget,
        hash_alg=config.hash_alg,
        opcode_table=config.opcode_table,
        env=env,
        aspects=aspects,
    )


def create_chain(config: ChainConfig, predecessor_version_hash: bytes | None = None) -> Chain:
    """Validate *config* and build a chain containing only its genesis block."""
    violations = validate_config(config)
    if violations:
        raise InvalidConfig(violations)
    chain = Chain(config, [make_genesis(config, predecessor_version_hash)], genesis_state(config))
    hook = config.chain_functions.get("OnCreate")
    if hook is not None:
        result = run_hook(config, hook, {"$0": config.chain_name, "$0.name": config.chain_name, "$1": 0})
        chain.hook_logs.append(("OnCreate", result.logs))
    return chain


# -- config files (.kchain) --------------------------------------------------


def decode_config(data: bytes) -> ChainConfig:
    return decode(data, ChainConfig)


def save_config(config: ChainConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(canonical_encode(config))
    return path


def load_config(path: str | Path) -> ChainConfig:
    return decode_config(Path(path).read_bytes())

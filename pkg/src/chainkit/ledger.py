"""Chain state machines: instance processing, block application and rewards.

Females create value or code, males consume or invoke a female they name by
hash.  A block is applied by folding every instance over the world state in
root declaration order; any failure rejects the whole block and leaves state
and graph untouched.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import vm
from .core import (
    Chain,
    block_hash,
    decode_config,
    genesis_state,
    instance_hash,
    make_genesis,
    parse_template,
    seal_binder,
    template_matches,
)
from .encoding import DecodeError, canonical_encode, decode
from .graphstore import CREATED, STORED_IN, TARGETED, GraphStore, Triple, ingest_block, insert_triple, search_contains
from .hashing import ZERO_HASH, hash_digest
from .mechanism import Puzzle, mine, verify_puzzle
from .merkle import UnknownRoot, compute_root_set, leaf_hash, tree_from_leaves
from .model import (
    Access,
    AccountState,
    Block,
    ChainConfig,
    ChainType,
    Gender,
    RootInstance,
    Status,
    UtxoOutput,
    WorldState,
)

__all__ = [
    "LedgerError",
    "MalformedInstance",
    "BadPredecessor",
    "RootSetMismatch",
    "InstanceFailed",
    "InvalidConsensusProof",
    "WrongChainType",
    "CorruptBlockFile",
    "ExecutionOutcome",
    "PARTNER_NOT_FOUND",
    "ALREADY_PAIRED",
    "INVALID_PARAMS",
    "CONSERVATION_VIOLATION",
    "INSUFFICIENT_FUNDS",
    "BUDGET_EXHAUSTED",
    "VM_ERROR",
    "DUPLICATE_INSTANCE",
    "RESERVED_SIGNATURES",
    "default_verifier",
    "template_check",
    "process_root_instance",
    "execute_female",
    "invoke_male",
    "validate_utxo_spend",
    "apply_block",
    "account_commitment",
    "reward_instance",
    "build_block",
    "seal_block",
    "select_instances",
    "append_block",
    "mine_next_block",
    "replay",
    "block_record",
    "split_records",
    "read_blocks",
    "write_blocks",
    "append_block_file",
]

# error kinds reported in ExecutionOutcome.error
PARTNER_NOT_FOUND = "PartnerNotFound"
ALREADY_PAIRED = "AlreadyPaired"
INVALID_PARAMS = "InvalidParams"
CONSERVATION_VIOLATION = "ConservationViolation"
INSUFFICIENT_FUNDS = "InsufficientFunds"
BUDGET_EXHAUSTED = "BudgetExhausted"
VM_ERROR = "VMError"
DUPLICATE_INSTANCE = "DuplicateInstance"

# markers on instances the ledger makes itself; never accepted from users
RESERVED_SIGNATURES = frozenset({b"coinbase", b"output"})

# return_spec schemas understood by the template guard
SPEC_ANY = b""
SPEC_OUTPUTS = b"outputs"
SPEC_INTS = b"ints"


class LedgerError(Exception):
    pass


class MalformedInstance(LedgerError):
    pass


class BadPredecessor(LedgerError):
    pass


class RootSetMismatch(LedgerError):
    pass


class InstanceFailed(LedgerError):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"instance {index} failed: {reason}")


class InvalidConsensusProof(LedgerError):
    pass


class WrongChainType(LedgerError):
    pass


class CorruptBlockFile(LedgerError):
    pass


@dataclass
class ExecutionOutcome:
    new_state: WorldState
    status: Status
    log: bytes = b""
    steps_used: int = 0
    error: str | None = None
    # (creator, hash) of instances produced as a side effect (UTXO outputs)
    created: list[tuple[str, bytes]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OK


def _fail(state: WorldState, kind: str, steps: int = 0) -> ExecutionOutcome:
    return ExecutionOutcome(state, Status.ERROR, b"", steps, kind)


Verifier = Callable[[RootInstance], bool]


def default_verifier(g: RootInstance) -> bool:
    """Signatures are opaque here; any non-empty signature is accepted."""
    return bool(g.signature)


# -- template guard ------------------------------------------------------------


def _decode_outputs(params: bytes) -> list[UtxoOutput] | None:
    try:
        outs = decode(params, list[UtxoOutput])
    except (DecodeError, ValueError):
        return None
    if any(o.amount < 0 for o in outs):
        return None
    return outs


def _decode_ints(params: bytes) -> list[int] | None:
    if params == b"":
        return []
    try:
        return decode(params, list[int])
    except (DecodeError, ValueError):
        return None


def _params_ok(g: RootInstance) -> bool:
    if g.return_spec == SPEC_ANY:
        return True
    if g.return_spec == SPEC_OUTPUTS:
        return _decode_outputs(g.params) is not None
    if g.return_spec == SPEC_INTS:
        return _decode_ints(g.params) is not None
    return False


def template_check(config: ChainConfig, g: RootInstance, verifier: Verifier = default_verifier) -> bool:
    """Admission verdict for *g*: only instances passing it are ever executed."""
    root = config.root(g.root_name)
    if root is None or not root.permits(g.gender):
        return False
    if (g.gender == Gender.MALE) != (g.partner_hash is not None):
        return False
    if g.value < 0:
        return False
    if g.signature in RESERVED_SIGNATURES:
        return False
    if Access.PRIVATE in (root.access, g.access):
        if not root.controller or g.sender != root.controller:
            return False
    for name in g.aspect_writes:
        aspect = root.aspect(name)
        if aspect is None or not aspect.mutable:
            return False
    try:
        template = parse_template(root.code_template, config.opcode_table)
    except ValueError:
        return False
    if not template_matches(template, g.code, config.opcode_table):
        return False
    if not _params_ok(g):
        return False
    return verifier(g)


# -- execution -----------------------------------------------------------------


def _env(g: RootInstance, args: Sequence[int] = ()) -> dict:
    env = {"sender": g.sender, "originator": g.originator, "value": g.value}
    env.update({f"${i}": a for i, a in enumerate(args)})
    return env


def _run(config: ChainConfig, code: bytes, aspects: dict, g: RootInstance, stack=(), args=()) -> vm.VMResult:
    return vm.run(
        code,
        budget=config.compute_budget,
        hash_alg=config.hash_alg,
        opcode_table=config.opcode_table,
        stack=stack,
        env=_env(g, args),
        aspects=aspects,
        aspect_scope=config.root(g.root_name),
    )


def _vm_failure(exc: vm.ExecutionError) -> str:
    return BUDGET_EXHAUSTED if isinstance(exc, vm.BudgetExhausted) else VM_ERROR


def _receipt(result: vm.VMResult) -> bytes:
    """Logged values followed by whatever the program left on the stack."""
    return vm.encode_log(list(result.logs) + list(result.stack))


def _debit(accounts: dict, who: str, amount: int) -> bool:
    if amount == 0:
        return True
    acct = accounts.get(who)
    if acct is None or acct.balance < amount:
        return False
    accounts[who] = AccountState(acct.balance - amount, acct.stored_code, acct.storage_root)
    return True


def _credit(accounts: dict, who: str, amount: int) -> None:
    acct = accounts.get(who, AccountState())
    accounts[who] = AccountState(acct.balance + amount, acct.stored_code, acct.storage_root)


def contract_id(config: ChainConfig, female: RootInstance) -> str:
    """Account id of the contract created by an account-mode female."""
    return instance_hash(config, female).hex()


def execute_female(config: ChainConfig, state: WorldState, g: RootInstance) -> ExecutionOutcome:
    """Create: UTXO females join the unspent set, account females store code."""
    new = state.copy()
    h = instance_hash(config, g)
    try:
        result = _run(config, g.code, new.aspects, g) if g.code else vm.VMResult(stack=[])
    except vm.ExecutionError as exc:
        return _fail(state, _vm_failure(exc))
    for name, v in g.aspect_writes.items():
        new.aspects[(g.root_name, name)] = v
    if config.chain_type == ChainType.UTXO:
        new.utxo_set[h] = g
    else:
        if not _debit(new.accounts, g.sender, g.value):
            return _fail(state, INSUFFICIENT_FUNDS, result.steps)
        body = result.body or b""
        storage_root = hash_digest(config, canonical_encode(body))
        new.accounts[contract_id(config, g)] = AccountState(g.value, body, storage_root)
        new.contracts[h] = g
    return ExecutionOutcome(new, Status.OK, _receipt(result), result.steps)


def validate_utxo_spend(consumed: Sequence[int], created: Sequence[int]) -> bool:
    """Outputs may not exceed inputs; the difference is the implicit fee."""
    return sum(created) <= sum(consumed)


def output_instance(config: ChainConfig, male: RootInstance, index: int, out: UtxoOutput) -> RootInstance:
    """The female a UTXO spend creates for its *index*-th requested output."""
    return RootInstance(
        root_name=male.root_name,
        gender=Gender.FEMALE,
        sender=out.owner,
        originator=male.sender,
        value=out.amount,
        params=canonical_encode([instance_hash(config, male), index]),
        signature=b"output",
    )


def invoke_male(config: ChainConfig, state: WorldState, male: RootInstance, female: RootInstance) -> ExecutionOutcome:
    """Pair *male* with *female*: spend it (UTXO) or call its body (account)."""
    new = state.copy()
    hf = instance_hash(config, female)
    hm = instance_hash(config, male)
    if config.chain_type == ChainType.UTXO:
        outputs = _decode_outputs(male.params)
        if not outputs:
            return _fail(state, INVALID_PARAMS)
        if not validate_utxo_spend([female.value], [o.amount for o in outputs]):
            return _fail(state, CONSERVATION_VIOLATION)
        try:
            result = _run(config, male.code, new.aspects, male) if male.code else vm.VMResult(stack=[])
        except vm.ExecutionError as exc:
            return _fail(state, _vm_failure(exc))
        del new.utxo_set[hf]
        created = []
        for i, out in enumerate(outputs):
            child = output_instance(config, male, i, out)
            hc = instance_hash(config, child)
            new.utxo_set[hc] = child
            created.append((out.owner, hc))
        steps = result.steps
    else:
        args = _decode_ints(male.params)
        if args is None:
            return _fail(state, INVALID_PARAMS)
        acct = new.accounts.get(contract_id(config, female))
        body = (acct.stored_code if acct else None) or b""
        try:
            result = _run(config, male.code + body, new.aspects, male, stack=args, args=args)
        except vm.ExecutionError as exc:
            return _fail(state, _vm_failure(exc))
        if not _debit(new.accounts, male.sender, male.value):
            return _fail(state, INSUFFICIENT_FUNDS, result.steps)
        if male.value:
            _credit(new.accounts, contract_id(config, female), male.value)
        created = []
        steps = result.steps
    for name, v in male.aspect_writes.items():
        new.aspects[(male.root_name, name)] = v
    log = _receipt(result)
    new.paired[hf] = hm
    new.receipts[hm] = log
    return ExecutionOutcome(new, Status.OK, log, steps, None, created)


def process_root_instance(
    config: ChainConfig,
    state: WorldState,
    graph: GraphStore,
    g: RootInstance,
    verifier: Verifier = default_verifier,
) -> ExecutionOutcome:
    """Dispatch on gender; a male must find its partner through the graph."""
    if not template_check(config, g, verifier):
        raise MalformedInstance(f"instance of root {g.root_name!r} rejected by template guard")
    # an identical instance hashes the same and would overwrite the stored one
    if search_contains(graph, instance_hash(config, g)):
        return _fail(state, DUPLICATE_INSTANCE)
    if g.gender == Gender.FEMALE:
        return execute_female(config, state, g)
    h = g.partner_hash
    if not search_contains(graph, h):
        return _fail(state, PARTNER_NOT_FOUND)
    root = config.root(g.root_name)
    if h in state.paired and not (config.chain_type == ChainType.ACCOUNT and root.multi_invoke):
        return _fail(state, ALREADY_PAIRED)
    pool = state.utxo_set if config.chain_type == ChainType.UTXO else state.contracts
    female = pool.get(h)
    if female is None or female.root_name != g.root_name:
        return _fail(state, INVALID_PARAMS)
    outcome = invoke_male(config, state, g, female)
    if any(search_contains(graph, hc) for _, hc in outcome.created):
        return _fail(state, DUPLICATE_INSTANCE)
    return outcome


# -- blocks --------------------------------------------------------------------


def _height_key(height: int) -> bytes:
    return str(height).encode()


def _instance_triples(g: RootInstance, h: bytes, height: int, created) -> list[Triple]:
    out = []
    if g.sender:
        out.append(Triple(g.sender.encode(), CREATED, h))
        if g.partner_hash is not None:
            out.append(Triple(g.sender.encode(), TARGETED, g.partner_hash))
    out.append(Triple(h, STORED_IN, _height_key(height)))
    for creator, hc in created:
        if creator:
            out.append(Triple(creator.encode(), CREATED, hc))
        out.append(Triple(hc, STORED_IN, _height_key(height)))
    return out


def ordered_instances(config: ChainConfig, block: Block) -> list[RootInstance]:
    return block.all_instances(tuple(r.name for r in config.roots))


def _fold(config, state, graph, height, instances, verifier, added):
    """Apply *instances* in order; triples go into *graph* and onto *added*."""
    logs = []
    steps = 0
    created = []
    for i, g in enumerate(instances):
        try:
            outcome = process_root_instance(config, state, graph, g, verifier)
        except MalformedInstance as exc:
            raise InstanceFailed(i, f"MalformedInstance: {exc}") from None
        if not outcome.ok:
            raise InstanceFailed(i, outcome.error)
        state = outcome.new_state
        steps += outcome.steps_used
        logs.append(outcome.log)
        created += outcome.created
        # inserted as we go so later instances in the block can find them
        for t in _instance_triples(g, instance_hash(config, g), height, outcome.created):
            if t not in graph:
                insert_triple(graph, t)
                added.append(t)
    return state, steps, logs, created


def reward_instance(config: ChainConfig, block: Block) -> RootInstance | None:
    """Coinbase female paying ``block_reward`` to the creator (UTXO chains)."""
    if config.chain_type != ChainType.UTXO or config.block_reward == 0 or not block.creator:
        return None
    root = next((r for r in config.roots if r.permits(Gender.FEMALE)), None)
    if root is None:
        return None
    return RootInstance(
        root_name=root.name,
        gender=Gender.FEMALE,
        sender=block.creator,
        originator=block.creator,
        value=config.block_reward,
        params=canonical_encode(block.height),
        signature=b"coinbase",
    )


def _reward(config: ChainConfig, state: WorldState, block: Block) -> list[tuple[str, bytes]]:
    """Credit the block creator in place; returns coinbase (creator, hash) pairs."""
    if not block.creator:
        return []
    if config.block_reward == 0:
        state.privileges[block.creator] = state.privileges.get(block.creator, 0) + 1
        return []
    if config.chain_type == ChainType.ACCOUNT:
        _credit(state.accounts, block.creator, config.block_reward)
        return []
    coin = reward_instance(config, block)
    if coin is None:
        return []
    h = instance_hash(config, coin)
    state.utxo_set[h] = coin
    return [(block.creator, h)]


def check_consensus(config: ChainConfig, block: Block) -> bool:
    if config.consensus.kind == "POW":
        return verify_puzzle(config, Puzzle(config.consensus.difficulty, seal_binder(block)), block.nonce)
    return bool(block.creator)


def apply_block(
    config: ChainConfig,
    state: WorldState,
    graph: GraphStore,
    block: Block,
    head: Block,
    verifier: Verifier = default_verifier,
) -> ExecutionOutcome:
    """Validate *block* against *head* and apply it; raises on rejection.

    On success *graph* holds the block's triples and the returned outcome
    carries the new state.  On failure neither *state* nor *graph* changes.
    """
    if block.height != head.height + 1 or block.predecessor_hash != block_hash(config, head):
        raise BadPredecessor(f"block {block.height} does not extend head {head.height}")
    if block.config_blob:
        raise BadPredecessor("only genesis may embed a configuration")
    try:
        expected = compute_root_set(config, block.instances)
    except UnknownRoot as exc:
        raise RootSetMismatch(f"undeclared root {exc.args[0]!r}") from None
    if tuple(block.root_set) != expected:
        raise RootSetMismatch("root set commitment does not match the instances")
    if not check_consensus(config, block):
        raise InvalidConsensusProof(f"block {block.height} carries no valid {config.consensus.kind} proof")
    added: list[Triple] = []
    try:
        new, steps, logs, created = _fold(
            config, state, graph, block.height, ordered_instances(config, block), verifier, added
        )
    except InstanceFailed:
        for t in added:
            graph.remove(t)
        raise
    if new is state:
        new = state.copy()
    created += _reward(config, new, block)
    ingest_block(graph, block, block.creator, config, created)
    return ExecutionOutcome(new, Status.OK, b"".join(logs), steps)


def account_commitment(config: ChainConfig, state: WorldState) -> bytes:
    """Merkle root over ``H(id) || encode(account)`` leaves sorted by ``H(id)``."""
    if state.chain_type != ChainType.ACCOUNT:
        raise WrongChainType("account commitment needs an account-based state")
    if not state.accounts:
        return ZERO_HASH
    keyed = sorted((hash_digest(config, a.encode()), acct) for a, acct in state.accounts.items())
    leaves = [leaf_hash(config, k + canonical_encode(acct)) for k, acct in keyed]
    return tree_from_leaves(config, leaves).root


# -- chain helpers ---------------------------------------------------------------


def _group(config: ChainConfig, instances: Iterable[RootInstance]) -> dict[str, tuple[RootInstance, ...]]:
    grouped: dict[str, list[RootInstance]] = {}
    for g in instances:
        grouped.setdefault(g.root_name, []).append(g)
    order = [r.name for r in config.roots] + sorted(set(grouped) - {r.name for r in config.roots})
    return {name: tuple(grouped[name]) for name in order if name in grouped}


def build_block(chain: Chain, instances: Sequence[RootInstance], creator: str, timestamp: int) -> Block:
    """Unsealed successor of the chain head carrying *instances*."""
    grouped = _group(chain.config, instances)
    return Block(
        height=chain.height + 1,
        predecessor_hash=chain.head_hash,
        timestamp=timestamp,
        root_set=compute_root_set(chain.config, grouped),
        instances=grouped,
        creator=creator,
    )


def seal_block(config: ChainConfig, block: Block, start: int = 0, limit: int | None = None) -> Block | None:
    """Attach a consensus proof; None when the counter range holds no solution."""
    if config.consensus.kind != "POW":
        return block
    found = mine(config, seal_binder(block), config.consensus.difficulty, start, limit)
    if found is None:
        return None
    return Block(**{**block.__dict__, "nonce": found[1]})


def select_instances(
    chain: Chain, candidates: Sequence[RootInstance], verifier: Verifier = default_verifier
) -> tuple[list[RootInstance], list[RootInstance]]:
    """Split *candidates* into (includable, rejected) for the next block.

    Candidates are tried in block execution order so that the accepted
    subset applies cleanly as one block.  Rejected candidates are retried
    while a pass admits something new, so a spend queued ahead of the
    output it consumes still makes it in when that root comes later.
    """
    rank = {r.name: i for i, r in enumerate(chain.config.roots)}
    remaining = [g for g in candidates if g.root_name in rank]
    drop = [g for g in candidates if g.root_name not in rank]
    keep: list[RootInstance] = []
    added: list[Triple] = []
    height = chain.height + 1
    try:
        while remaining:
            chosen = _admit(chain, keep + remaining, rank, height, verifier, added)
            new = [g for g in remaining if any(g is c for c in chosen)]
            if not new:
                break
            drop += [g for g in keep if not any(g is c for c in chosen)]
            keep = chosen
            remaining = [g for g in remaining if not any(g is n for n in new)]
    finally:
        for t in added:
            chain.graph.remove(t)
    return keep, drop + remaining


def _admit(chain, candidates, rank, height, verifier, added) -> list[RootInstance]:
    """One greedy pass in execution order; returns the admitted instances."""
    ordered = sorted(candidates, key=lambda g: rank[g.root_name])
    for t in added:
        chain.graph.remove(t)
    added.clear()
    state = chain.world
    keep = []
    for g in ordered:
        try:
            state, _, _, _ = _fold(chain.config, state, chain.graph, height, [g], verifier, added)
        except InstanceFailed:
            continue
        keep.append(g)
    return keep


def append_block(chain: Chain, block: Block, verifier: Verifier = default_verifier) -> ExecutionOutcome:
    outcome = apply_block(chain.config, chain.world, chain.graph, block, chain.head, verifier)
    chain.world = outcome.new_state
    chain.blocks.append(block)
    return outcome


def mine_next_block(
    chain: Chain,
    creator: str,
    timestamp: int,
    start: int = 0,
    limit: int | None = None,
    verifier: Verifier = default_verifier,
) -> Block | None:
    """Package valid pending instances into a sealed block and append it.

    Invalid pending instances are discarded.  Returns None (chain unchanged)
    when no proof is found within ``limit`` counters.
    """
    keep, drop = select_instances(chain, chain.pending, verifier)
    block = seal_block(chain.config, build_block(chain, keep, creator, timestamp), start, limit)
    if block is None:
        return None
    append_block(chain, block, verifier)
    used = {id(g) for g in keep} | {id(g) for g in drop}
    chain.pending = [g for g in chain.pending if id(g) not in used]
    return block


def replay(blocks: Sequence[Block], verifier: Verifier = default_verifier) -> Chain:
    """Rebuild a chain (state and graph) from its blocks, genesis first."""
    if not blocks:
        raise CorruptBlockFile("no genesis block")
    genesis = blocks[0]
    config = decode_config(genesis.config_blob)
    if genesis != make_genesis(config, genesis.predecessor_version_hash):
        raise CorruptBlockFile("first block is not a well-formed genesis")
    chain = Chain(config, [genesis], genesis_state(config))
    for block in blocks[1:]:
        append_block(chain, block, verifier)
    return chain


# -- block files -------------------------------------------------------------------

_LEN = struct.Struct(">Q")


def block_record(block: Block) -> bytes:
    body = canonical_encode(block)
    return _LEN.pack(len(body)) + body


def split_records(data: bytes) -> tuple[list[bytes], bytes]:
    """Complete length-prefixed records of *data* plus any malformed tail."""
    records = []
    pos = 0
    while pos + _LEN.size <= len(data):
        (n,) = _LEN.unpack_from(data, pos)
        end = pos + _LEN.size + n
        if end > len(data):
            break
        records.append(data[pos:end])
        pos = end
    return records, data[pos:]


def read_blocks(path: str | Path) -> list[Block]:
    records, tail = split_records(Path(path).read_bytes())
    if tail:
        raise CorruptBlockFile(f"{path}: {len(tail)} trailing bytes do not form a record")
    try:
        return [decode(r[_LEN.size :], Block) for r in records]
    except (DecodeError, ValueError) as exc:
        raise CorruptBlockFile(f"{path}: {exc}") from None


def write_blocks(path: str | Path, blocks: Iterable[Block]) -> Path:
    path = Path(path)
    path.write_bytes(b"".join(block_record(b) for b in blocks))
    return path


def append_block_file(path: str | Path, block: Block) -> None:
    with open(path, "ab") as fh:
        fh.write(block_record(block))

"""Deterministic discrete-event simulation of a network of mining nodes.

Every node keeps its own chain, mines by scanning a counter stream derived
from the seed, gossips blocks and messages to its peers with a fixed latency
and adopts strictly longer valid chains (first seen wins ties).  Events are
ordered by ``(time, insertion sequence)``, so a run is a pure function of its
inputs and the report is byte-stable.
"""
from __future__ import annotations

import dataclasses
import enum
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import ledger, vm
from .analytics import chain_stats, format_rational
from .core import (
    Chain,
    InvalidConfig,
    Violation,
    block_hash,
    create_chain,
    instance_hash,
    seal_binder,
    validate_config,
)
from .encoding import canonical_encode, decode
from .hashing import hash_digest
from .mechanism import pow_mine_step
from .merkle import compute_root_set, tree_from_leaves
from .model import Block, ChainConfig, ChainType, Gender, RootInstance, UtxoOutput

__all__ = [
    "EventKind",
    "SimEvent",
    "SimConfig",
    "NodeState",
    "NodeSummary",
    "SimReport",
    "UnlinkableCandidate",
    "Simulation",
    "run_simulation",
    "fork_choice",
    "broadcast",
    "invalid_fork",
    "rollover_hash",
    "rollover_chain",
]


class EventKind(enum.IntEnum):
    MINE_ATTEMPT = 0
    DELIVER_BLOCK = 1
    DELIVER_MESSAGE = 2
    INJECT_INSTANCE = 3


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: EventKind
    payload: bytes
    target: str
    source: str = ""


@dataclass
class SimConfig:
    n_nodes: int = 1
    seed: int = 0
    duration: int = 10
    z_l: int = 1
    # (i, j) -> delay; missing pairs use default_latency
    latency: dict[tuple[int, int], int] = field(default_factory=dict)
    default_latency: int = 1
    # None means a complete graph
    topology: dict[int, tuple[int, ...]] | None = None
    # counters scanned per node per MINE_ATTEMPT
    hashes_per_tick: int = 8
    # no new mining after this time unless a node sees an unresolved tie
    mine_until: int | None = None
    instance_script: list[tuple[int, int, RootInstance]] = field(default_factory=list)
    # (time, node, value): the node broadcasts value as a peer message
    message_script: list[tuple[int, int, int | bytes]] = field(default_factory=list)
    # (time, blocks): blocks delivered to every node by an outside party
    block_script: list[tuple[int, list[Block]]] = field(default_factory=list)


def node_name(i: int) -> str:
    return f"N{i}"


class UnlinkableCandidate(ValueError):
    pass


@dataclass
class NodeState:
    node_id: str
    index: int
    chain: Chain
    peers: list[int]
    counter: int
    pool: dict[bytes, Block] = field(default_factory=dict)
    arrival: dict[bytes, int] = field(default_factory=dict)
    rejected: set[bytes] = field(default_factory=set)
    forks: int = 0
    hook_logs: list[tuple[str, list]] = field(default_factory=list)

    @property
    def world(self):
        return self.chain.world

    @property
    def graph(self):
        return self.chain.graph

    @property
    def pending(self):
        return self.chain.pending


@dataclass(frozen=True)
class NodeSummary:
    node_id: str
    head_hash: str
    height: int
    forks: int


@dataclass
class SimReport:
    nodes: list[NodeSummary]
    fork_count: int
    blocks_mined: int
    avg_block_time: str
    instance_count: int
    events: list[str]

    @property
    def converged(self) -> bool:
        return len({n.head_hash for n in self.nodes}) == 1

    def summary(self) -> str:
        lines = [f"nodes {len(self.nodes)}", f"blocks_mined {self.blocks_mined}", f"fork_count {self.fork_count}"]
        lines.append(f"avg_block_time {self.avg_block_time}")
        lines.append(f"instances {self.instance_count}")
        lines.append(f"converged {'yes' if self.converged else 'no'}")
        for n in self.nodes:
            lines.append(f"{n.node_id} height={n.height} head={n.head_hash} forks={n.forks}")
        return "\n".join(lines) + "\n"

    def event_log(self) -> str:
        return "".join(line + "\n" for line in self.events)

    def to_bytes(self) -> bytes:
        return (self.summary() + self.event_log()).encode()


# -- fork choice -------------------------------------------------------------------


def fork_choice(local: Chain, candidate: Sequence[Block], verifier=ledger.default_verifier) -> Chain:
    """Adopt *candidate* (a suffix linking into *local*) iff it yields a strictly
    longer valid chain; otherwise return *local* unchanged."""
    if not candidate:
        return local
    hashes = local.hashes()
    try:
        fork = hashes.index(candidate[0].predecessor_hash)
    except ValueError:
        raise UnlinkableCandidate("candidate does not attach to the local chain") from None
    if fork + len(candidate) <= local.height:
        return local
    try:
        if fork == local.height:
            # plain extension: apply on a copy instead of replaying from genesis
            adopted = Chain(local.config, list(local.blocks), local.world, local.graph.copy())
            for b in candidate:
                ledger.append_block(adopted, b, verifier)
        else:
            adopted = ledger.replay(local.blocks[: fork + 1] + list(candidate), verifier)
    except ledger.LedgerError:
        return local
    included = {instance_hash(adopted.config, g) for b in adopted.blocks for g in b.all_instances()}
    orphaned = [g for b in local.blocks[fork + 1 :] for g in b.all_instances()]
    adopted.pending = [g for g in orphaned + local.pending if instance_hash(adopted.config, g) not in included]
    adopted.hook_logs = local.hook_logs
    return adopted


# -- simulation --------------------------------------------------------------------


class Simulation:
    def __init__(self, chain_config: ChainConfig, sim: SimConfig):
        problems = _check_sim(sim)
        cfg = dataclasses.replace(
            chain_config, consensus=dataclasses.replace(chain_config.consensus, difficulty=sim.z_l)
        )
        problems += validate_config(cfg)
        if problems:
            raise InvalidConfig(problems)
        self.config = cfg
        self.sim = sim
        self.mine_until = sim.duration if sim.mine_until is None else sim.mine_until
        self.queue: list[tuple[int, int, SimEvent]] = []
        self.seq = 0
        self.events: list[str] = []
        self.blocks_mined = 0
        self.now = 0
        self.nodes: list[NodeState] = []
        genesis = create_chain(cfg)
        for i in range(sim.n_nodes):
            peers = list(sim.topology[i]) if sim.topology is not None else [j for j in range(sim.n_nodes) if j != i]
            seed = hash_digest(cfg, canonical_encode([sim.seed, node_name(i)]))
            chain = Chain(cfg, list(genesis.blocks), genesis.world.copy(), genesis.graph.copy())
            chain.hook_logs = list(genesis.hook_logs)
            self.nodes.append(NodeState(node_name(i), i, chain, peers, int.from_bytes(seed[:4], "big")))

    # scheduling

    def schedule(self, ev: SimEvent) -> None:
        heapq.heappush(self.queue, (ev.time, self.seq, ev))
        self.seq += 1

    def latency(self, i: int, j: int) -> int:
        return self.sim.latency.get((i, j), self.sim.default_latency)

    def record(self, kind: str, node: str, payload: bytes = b"", **extra) -> None:
        entry = {"time": self.now, "kind": kind, "node": node, "payload": hash_digest(self.config, payload).hex()}
        entry.update(extra)
        self.events.append(json.dumps(entry, sort_keys=True))

    # hooks

    def run_hook(self, node: NodeState, name: str, code: bytes, env: dict) -> None:
        try:
            result = vm.run(
                code,
                budget=self.config.compute_budget,
                hash_alg=self.config.hash_alg,
                opcode_table=self.config.opcode_table,
                env=env,
                aspects=dict(node.world.aspects),
            )
        except vm.ExecutionError as exc:
            self.record("HOOK_ERROR", node.node_id, name.encode(), hook=name, error=str(exc))
            return
        node.hook_logs.append((name, result.logs))
        for effect, value in result.effects:
            if effect == "Broadcast":
                broadcast(self, node.node_id, value)

    def hooks_for(self, name: str) -> list[tuple[str, bytes]]:
        out = []
        if name in self.config.chain_functions:
            out.append((name, self.config.chain_functions[name]))
        for m in self.config.mechanisms:
            if name in m.hooks:
                out.append((f"{m.name}.{name}", m.hooks[name]))
        return out

    def block_env(self, block: Block) -> dict:
        return {
            "$0": block.height,
            "$0.id": block.height,
            "$0.height": block.height,
            "$0.nonce": block.nonce,
            "$0.timestamp": block.timestamp,
            "$0.creator": block.creator,
            "$1": block_hash(self.config, block),
        }

    # event handlers

    def on_mine(self, node: NodeState) -> None:
        if self.now >= self.mine_until and not self.sees_tie(node):
            return
        chain = node.chain
        if self.config.consensus.kind == "NOMINATION":
            if self.now % len(self.nodes) != node.index:
                return
            keep, _ = ledger.select_instances(chain, chain.pending)
            block = ledger.build_block(chain, keep, node.node_id, self.now)
        else:
            keep, _ = ledger.select_instances(chain, chain.pending)
            block = ledger.build_block(chain, keep, node.node_id, self.now)
            binder = seal_binder(block)
            nonce = None
            for c in range(node.counter, node.counter + self.sim.hashes_per_tick):
                nonce = pow_mine_step(self.config, binder, self.config.consensus.difficulty, c)
                if nonce is not None:
                    break
            node.counter += self.sim.hashes_per_tick
            if nonce is None:
                return
            block = dataclasses.replace(block, nonce=nonce)
        ledger.append_block(chain, block)
        included = {id(g) for g in keep}
        chain.pending = [g for g in chain.pending if id(g) not in included]
        h = block_hash(self.config, block)
        node.pool[h] = block
        node.arrival[h] = self.seq
        self.blocks_mined += 1
        self.record("BLOCK_MINED", node.node_id, h, height=block.height)
        env = self.block_env(block)
        for name, code in self.hooks_for("OnNewBlock") + self.hooks_for("Execute"):
            self.run_hook(node, name, code, env)
        self.send_block(node, block)

    def sees_tie(self, node: NodeState) -> bool:
        head = node.chain.head_hash
        return any(
            b.height == node.chain.height and h != head and h not in node.rejected for h, b in node.pool.items()
        )

    def send_block(self, node: NodeState, block: Block) -> None:
        payload = canonical_encode(block)
        for j in node.peers:
            self.schedule(
                SimEvent(self.now + self.latency(node.index, j), EventKind.DELIVER_BLOCK, payload, node_name(j), node.node_id)
            )

    def on_block(self, node: NodeState, ev: SimEvent) -> None:
        block = decode(ev.payload, Block)
        h = block_hash(self.config, block)
        if h in node.pool:
            return
        node.pool[h] = block
        node.arrival[h] = self.seq
        self.record("DELIVER_BLOCK", node.node_id, h, source=ev.source, height=block.height)
        for name, code in self.hooks_for("OnBlockReceived"):
            self.run_hook(node, name, code, self.block_env(block))
        self.send_block(node, block)
        self.choose(node)

    def choose(self, node: NodeState) -> None:
        """Try pool tips from highest (earliest seen first) until one is adopted."""
        local = set(node.chain.hashes())
        tips = sorted(
            (h for h, b in node.pool.items() if h not in local and h not in node.rejected and b.height > node.chain.height),
            key=lambda h: (-node.pool[h].height, node.arrival[h]),
        )
        for tip in tips:
            suffix = self.ancestry(node, tip, local)
            if suffix is None:
                continue
            before = node.chain
            after = fork_choice(before, suffix)
            if after is before:
                node.rejected.add(tip)
                self.record("REJECT_FORK", node.node_id, tip, height=node.pool[tip].height)
                continue
            replaced = sum(1 for a, b in zip(before.hashes(), after.hashes()) if a != b)
            if replaced:
                node.forks += 1
            node.chain = after
            self.record("ADOPT", node.node_id, tip, height=after.height, replaced=replaced)
            return

    def ancestry(self, node: NodeState, tip: bytes, local: set[bytes]) -> list[Block] | None:
        out = []
        h = tip
        while h not in local:
            b = node.pool.get(h)
            if b is None or h in node.rejected:
                return None
            out.append(b)
            h = b.predecessor_hash
        out.reverse()
        return out

    def on_message(self, node: NodeState, ev: SimEvent) -> None:
        value = vm.decode_log(ev.payload)[0]
        self.record("DELIVER_MESSAGE", node.node_id, ev.payload, source=ev.source)
        env = {"$0": ev.source, "$0.id": ev.source, "$0.message": value}
        for name, code in self.hooks_for("OnPeerMessage"):
            self.run_hook(node, name, code, env)

    def on_inject(self, node: NodeState, ev: SimEvent) -> None:
        g = decode(ev.payload, RootInstance)
        node.chain.pending.append(g)
        self.record("INJECT_INSTANCE", node.node_id, ev.payload)

    # main loop

    def run(self) -> SimReport:
        sim = self.sim
        for node in self.nodes:
            for j in node.peers:
                for name, code in self.hooks_for("OnNewPeer"):
                    self.run_hook(node, name, code, {"$0": node_name(j), "$0.id": node_name(j)})
        for t, i, g in sim.instance_script:
            self.schedule(SimEvent(t, EventKind.INJECT_INSTANCE, canonical_encode(g), node_name(i)))
        for t, i, value in sim.message_script:
            self.schedule(SimEvent(t, EventKind.DELIVER_MESSAGE, vm.encode_log([value]), "", node_name(i)))
        for t, blocks in sim.block_script:
            for node in self.nodes:
                for b in blocks:
                    self.schedule(SimEvent(t, EventKind.DELIVER_BLOCK, canonical_encode(b), node.node_id, "outside"))
        for t in range(sim.duration):
            for node in self.nodes:
                self.schedule(SimEvent(t, EventKind.MINE_ATTEMPT, b"", node.node_id))
        by_id = {n.node_id: n for n in self.nodes}
        while self.queue:
            t, _, ev = heapq.heappop(self.queue)
            if t > sim.duration:
                break
            self.now = t
            if ev.kind == EventKind.DELIVER_MESSAGE and ev.target == "":
                # scripted message: the source node broadcasts it
                broadcast(self, ev.source, vm.decode_log(ev.payload)[0])
                continue
            node = by_id[ev.target]
            if ev.kind == EventKind.MINE_ATTEMPT:
                self.on_mine(node)
            elif ev.kind == EventKind.DELIVER_BLOCK:
                self.on_block(node, ev)
            elif ev.kind == EventKind.DELIVER_MESSAGE:
                self.on_message(node, ev)
            else:
                self.on_inject(node, ev)
        return self.report()

    def report(self) -> SimReport:
        summaries = [
            NodeSummary(n.node_id, n.chain.head_hash.hex(), n.chain.height, n.forks) for n in self.nodes
        ]
        reference = self.nodes[0].chain
        stats = chain_stats(reference)
        return SimReport(
            summaries,
            sum(n.forks for n in self.nodes),
            self.blocks_mined,
            format_rational(stats.avg_block_time),
            stats.instance_count,
            self.events,
        )


def _check_sim(sim: SimConfig) -> list[Violation]:
    out = []
    if sim.n_nodes < 1:
        out.append(Violation("n_nodes", "must be >= 1"))
    if sim.duration < 0:
        out.append(Violation("duration", "must be >= 0"))
    if sim.default_latency < 1 or any(v < 1 for v in sim.latency.values()):
        out.append(Violation("latency", "must be >= 1 between distinct nodes"))
    if not 0 <= sim.z_l <= 64:
        out.append(Violation("z_l", "must lie in [0, 64]"))
    if sim.hashes_per_tick < 1:
        out.append(Violation("hashes_per_tick", "must be >= 1"))
    if sim.topology is not None:
        for i, peers in sim.topology.items():
            if any(not 0 <= j < sim.n_nodes or j == i for j in peers):
                out.append(Violation("topology", f"node {i} lists an invalid peer"))
    return out


def broadcast(sim: Simulation, node_id: str, message) -> list[SimEvent]:
    """Schedule one DELIVER_MESSAGE per peer of *node_id*; returns them."""
    node = next(n for n in sim.nodes if n.node_id == node_id)
    payload = vm.encode_log([message])
    sim.record("BROADCAST", node_id, payload, peers=len(node.peers))
    out = []
    for j in node.peers:
        ev = SimEvent(sim.now + sim.latency(node.index, j), EventKind.DELIVER_MESSAGE, payload, node_name(j), node_id)
        sim.schedule(ev)
        out.append(ev)
    return out


def run_simulation(chain_config: ChainConfig, sim: SimConfig) -> SimReport:
    return Simulation(chain_config, sim).run()


# -- fixtures ------------------------------------------------------------------------


def invalid_fork(config: ChainConfig, genesis: Block, length: int, bad_index: int, creator: str = "mallory") -> list[Block]:
    """A sealed chain of *length* blocks on *genesis* whose block *bad_index*
    (1-based) breaks the ledger rules.

    With a root admitting both genders the bad block spends a 10-unit female
    into 11 units (conservation violation); otherwise it holds a male whose
    partner does not exist.
    """
    if not 1 <= bad_index <= length:
        raise ValueError("bad_index must lie in [1, length]")
    both = next((r for r in config.roots if r.permits(Gender.FEMALE) and r.permits(Gender.MALE)), None)
    males = next((r for r in config.roots if r.permits(Gender.MALE)), None)
    if males is None:
        raise ValueError("the configuration declares no root admitting males")
    female = both and RootInstance(both.name, Gender.FEMALE, sender=creator, value=10, params=b"fixture")
    blocks: list[Block] = []
    prev = genesis
    for height in range(1, length + 1):
        instances: list[RootInstance] = []
        if height == 1 and both is not None:
            instances.append(female)
        if height == bad_index:
            if both is not None and config.chain_type == ChainType.UTXO:
                spend = [UtxoOutput(creator, 11)]
                instances.append(
                    RootInstance(both.name, Gender.MALE, partner_hash=instance_hash(config, female), sender=creator,
                                 params=canonical_encode(spend), return_spec=b"outputs")
                )
            else:
                instances.append(RootInstance(males.name, Gender.MALE, partner_hash=b"\xee" * 32, sender=creator))
        grouped: dict[str, tuple[RootInstance, ...]] = {}
        for g in instances:
            grouped[g.root_name] = grouped.get(g.root_name, ()) + (g,)
        grouped = {r.name: grouped[r.name] for r in config.roots if r.name in grouped}
        block = Block(
            height=height,
            predecessor_hash=block_hash(config, prev),
            timestamp=prev.timestamp,
            root_set=compute_root_set(config, grouped),
            instances=grouped,
            creator=creator,
        )
        block = ledger.seal_block(config, block)
        blocks.append(block)
        prev = block
    return blocks


# -- rollover -----------------------------------------------------------------------


def rollover_hash(config: ChainConfig, block_file: bytes) -> bytes:
    """Merkle root over the digests of every record in a block file.

    A trailing fragment that is not a whole record becomes the last leaf, so
    every byte of the file is committed.
    """
    records, tail = ledger.split_records(block_file)
    leaves = [hash_digest(config, r) for r in records]
    if tail:
        leaves.append(hash_digest(config, tail))
    return tree_from_leaves(config, leaves).root


def rollover_chain(old, new_config: ChainConfig) -> Chain:
    """Start a chain under *new_config* whose genesis commits to *old*.

    *old* is a :class:`Chain`, the bytes of a block file, or a path to one.
    """
    if isinstance(old, Chain):
        data = b"".join(ledger.block_record(b) for b in old.blocks)
    elif isinstance(old, (bytes, bytearray)):
        data = bytes(old)
    else:
        data = Path(old).read_bytes()
    return create_chain(new_config, predecessor_version_hash=rollover_hash(new_config, data))

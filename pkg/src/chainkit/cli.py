"""Command-line entry point.

Chains live as files in a working directory (``--dir``, default ``.``)::

    <name>.kchain    encoded configuration
    <name>.blocks    length-prefixed encoded blocks, genesis first
    <name>.hexa      graph snapshot
    <name>.pending   length-prefixed encoded instances waiting for a block

Exit status: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import analytics, ledger, mechanism, merkle
from .core import Chain, InvalidConfig, create_chain, instance_hash, save_config
from .dsl import LexError, LoweringError, ParseError, eval_interaction, lower_to_config, parse_source
from .dsl.nodes import ChainDecl, Program
from .dsl.interact import MalformedInstanceLiteral, UnknownMethod
from .encoding import DecodeError, canonical_encode, decode
from .graphstore import STORED_IN, GraphStore, query_pattern, search_contains
from .model import ChainType, RootInstance
from .netsim import SimConfig, rollover_chain, run_simulation

__all__ = ["main", "main_exit", "build_parser", "DomainError"]


class DomainError(Exception):
    pass


# -- chain files ---------------------------------------------------------------


def _paths(directory: Path, name: str) -> dict[str, Path]:
    return {ext: directory / f"{name}.{ext}" for ext in ("kchain", "blocks", "hexa", "pending")}


def _find_chain(directory: Path, name: str | None) -> str:
    if name:
        if not (directory / f"{name}.blocks").exists():
            raise DomainError(f"no chain loaded: {name}.blocks not found in {directory}")
        return name
    found = sorted(p.stem for p in directory.glob("*.blocks"))
    if not found:
        raise DomainError("no chain loaded")
    if len(found) > 1:
        raise DomainError(f"several chains present ({', '.join(found)}); pick one with --chain")
    return found[0]


def _read_pending(path: Path) -> list[RootInstance]:
    if not path.exists():
        return []
    records, tail = ledger.split_records(path.read_bytes())
    if tail:
        raise DomainError(f"{path}: truncated pending record")
    return [decode(r[8:], RootInstance) for r in records]


def _write_pending(path: Path, pending: list[RootInstance]) -> None:
    path.write_bytes(b"".join(len(b).to_bytes(8, "big") + b for b in (canonical_encode(g) for g in pending)))


def load_chain(directory: Path, name: str | None) -> Chain:
    name = _find_chain(directory, name)
    paths = _paths(directory, name)
    chain = ledger.replay(ledger.read_blocks(paths["blocks"]))
    chain.pending = _read_pending(paths["pending"])
    return chain


def _guard_new(directory: Path, name: str, force: bool) -> None:
    if not force and (directory / f"{name}.blocks").exists():
        raise DomainError(f"chain {name!r} already exists in {directory}; pass --force to overwrite")


def save_chain(directory: Path, chain: Chain) -> None:
    paths = _paths(directory, chain.config.chain_name)
    save_config(chain.config, paths["kchain"])
    ledger.write_blocks(paths["blocks"], chain.blocks)
    chain.graph.save(paths["hexa"])
    _write_pending(paths["pending"], chain.pending)


def _parse_file(path: Path) -> Program:
    try:
        return parse_source(path.read_text(encoding="utf-8"), str(path))
    except (LexError, ParseError) as exc:
        raise DomainError(f"{path}:{exc}") from None


def _declared(p: Program) -> set[str]:
    return {getattr(d, "name", None) for d in p.declarations} - {None}


def _compile(specs: list[str]):
    """Compile the given files, pulling unresolved imports from sibling .kl files."""
    programs = [_parse_file(Path(s)) for s in specs]
    seen = {Path(s).resolve() for s in specs}
    dirs = list(dict.fromkeys(Path(s).resolve().parent for s in specs))
    while True:
        have = set().union(*(_declared(p) for p in programs))
        missing = {i.name for p in programs for i in p.imports} - have
        if not missing:
            break
        extra = None
        for d in dirs:
            for f in sorted(d.glob("*.kl")):
                if f.resolve() in seen:
                    continue
                try:
                    cand = parse_source(f.read_text(encoding="utf-8"), str(f))
                except (LexError, ParseError, OSError, UnicodeDecodeError):
                    continue
                if _declared(cand) & missing and not cand.of_type(ChainDecl):
                    extra = (f.resolve(), cand)
                    break
            if extra:
                break
        if extra is None:
            break  # let validation report the unresolved import
        seen.add(extra[0])
        programs.append(extra[1])
    return lower_to_config(programs)


# -- verbs -----------------------------------------------------------------------


def cmd_create(args, out) -> None:
    config = _compile(args.spec)
    _guard_new(args.dir, config.chain_name, args.force)
    chain = create_chain(config)
    save_chain(args.dir, chain)
    out.write(f"created {config.chain_name} genesis {chain.head_hash.hex()}\n")


def cmd_run(args, out) -> None:
    chain = load_chain(args.dir, args.chain)
    paths = _paths(args.dir, chain.config.chain_name)
    for _ in range(args.blocks):
        block = ledger.mine_next_block(chain, args.creator, chain.head.timestamp + args.interval, args.start, args.limit)
        if block is None:
            raise DomainError("no proof of work found within the counter limit")
        ledger.append_block_file(paths["blocks"], block)
        out.write(f"block {block.height} {ledger.block_hash(chain.config, block).hex()} instances={len(block.all_instances())}\n")
    chain.graph.save(paths["hexa"])
    _write_pending(paths["pending"], chain.pending)


def cmd_send(args, out) -> None:
    chain = load_chain(args.dir, args.chain)
    result = eval_interaction(chain, args.expr)
    if isinstance(result, bytes):
        out.write(result.hex() + "\n")
    elif isinstance(result, bool):
        out.write(("true" if result else "false") + "\n")
    elif isinstance(result, analytics.ChainStats):
        out.write(analytics.text_report(chain))
    else:
        out.write(f"{result}\n")
    _write_pending(_paths(args.dir, chain.config.chain_name)["pending"], chain.pending)


def _component(text: str | None) -> bytes | None:
    if text is None:
        return None
    if text.startswith("0x"):
        return bytes.fromhex(text[2:])
    return text.encode()


def _show(b: bytes) -> str:
    try:
        s = b.decode("ascii")
        if s.isprintable():
            return s
    except UnicodeDecodeError:
        pass
    return "0x" + b.hex()


def _hash_arg(text: str) -> bytes:
    try:
        return bytes.fromhex(text[2:] if text.startswith("0x") else text)
    except ValueError:
        raise DomainError(f"{text!r} is not a hex hash") from None


def _names(text: str | None) -> list[str]:
    return [x for x in (text or "").split(",") if x]


def _prove(chain: Chain, h: bytes, out) -> None:
    heights = [t.object for t in query_pattern(chain.graph, h, STORED_IN)]
    if not heights:
        raise DomainError(f"{h.hex()} is not stored in this chain")
    block = chain.blocks[int(heights[0])]
    for entry in block.root_set:
        members = list(block.instances.get(entry.root_name, ()))
        hashes = [instance_hash(chain.config, g) for g in members]
        if h not in hashes:
            continue
        index = hashes.index(h)
        proof = merkle.prove_inclusion(merkle.build_tree(chain.config, members), index)
        ok = merkle.verify_proof(chain.config, proof) and proof.expected_root == entry.commitment
        out.write(f"block {block.height} root {entry.root_name} index {index}\n")
        out.write(f"leaf {proof.leaf.hex()}\n")
        for step in proof.path:
            out.write(f"{step.side.name.lower()} {step.sibling.hex()}\n")
        out.write(f"commitment {entry.commitment.hex()}\n")
        out.write(f"verified {'yes' if ok else 'no'}\n")
        if not ok:
            raise DomainError("inclusion proof does not verify")
        return
    raise DomainError(f"{h.hex()} was produced implicitly at height {block.height} and has no inclusion proof")


def cmd_query(args, out) -> None:
    if args.include or args.exclude:
        if not args.contains:
            raise DomainError("--include/--exclude need --contains")
        include = [load_chain(args.dir, n) for n in _names(args.include)]
        exclude = [load_chain(args.dir, n) for n in _names(args.exclude)]
        found = analytics.inter_economy_contains(_hash_arg(args.contains), include, exclude)
        out.write(("yes" if found else "no") + "\n")
        return
    if args.prove:
        _prove(load_chain(args.dir, args.chain), _hash_arg(args.prove), out)
        return
    name = _find_chain(args.dir, args.chain)
    hexa = _paths(args.dir, name)["hexa"]
    if not hexa.exists():
        raise DomainError("no chain loaded")
    store = GraphStore.load(hexa)
    if args.contains:
        out.write(("yes" if search_contains(store, _hash_arg(args.contains)) else "no") + "\n")
        return
    for t in query_pattern(store, _component(args.s), _component(args.p), _component(args.o)):
        out.write(f"{_show(t.subject)} {_show(t.predicate)} {_show(t.object)}\n")


def cmd_analyze(args, out) -> None:
    chain = load_chain(args.dir, args.chain)
    extra = ""
    if chain.config.chain_type == ChainType.ACCOUNT:
        extra = ledger.account_commitment(chain.config, chain.world).hex()
    report = analytics.text_report(chain)
    if extra:
        first = report.splitlines()[0]
        width = len(first) - len(first.split()[-1]) - 2
        report += f"{'state_commitment':<{width}}  {extra}\n"
    out.write(report)
    if args.csv:
        text = analytics.csv_report(chain) + (f"state_commitment,{extra}\n" if extra else "")
        Path(args.csv).write_text(text, encoding="utf-8")


def _message(text: str) -> tuple[int, int, int | bytes]:
    t, sep, rest = text.partition(":")
    node, sep2, value = rest.partition(":")
    if not (sep and sep2):
        raise DomainError(f"message {text!r} is not TIME:NODE:VALUE")
    try:
        return int(t), int(node), int(value)
    except ValueError:
        try:
            return int(t), int(node), value.encode()
        except ValueError:
            raise DomainError(f"message {text!r} is not TIME:NODE:VALUE") from None


def cmd_simulate(args, out) -> None:
    config = _compile(args.spec)
    sim = SimConfig(
        n_nodes=args.nodes,
        seed=args.seed,
        duration=args.duration,
        z_l=args.difficulty,
        mine_until=args.mine_until,
        hashes_per_tick=args.hashes_per_tick,
        message_script=[_message(m) for m in args.message],
    )
    report = run_simulation(config, sim)
    out.write(report.summary())
    if args.events:
        Path(args.events).write_text(report.event_log(), encoding="utf-8")


def _grid(text: str) -> list[int]:
    try:
        grid = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise DomainError(f"grid {text!r} is not a comma separated list of integers") from None
    if not grid or grid[0] < 0:
        raise DomainError("grid needs at least one non-negative bid")
    return grid


def cmd_check_ic(args, out) -> None:
    if args.table:
        mech = mechanism.read_table(args.table)
    else:
        build = mechanism.vickrey_mechanism if args.auction == "vickrey" else mechanism.first_price_mechanism
        mech = build(_grid(args.grid), args.players)
    if args.dump:
        Path(args.dump).write_text(mechanism.dump_table(mech), encoding="utf-8")
    report = mechanism.check_ic(mech)
    out.write(report.summary() + "\n")
    out.write(f"efficient: {'no' if mechanism.inefficient_profiles(mech) else 'yes'}\n")
    if args.evaluate:
        labels = mech.type_labels or [[str(k) for k in range(len(sp))] for sp in mech.type_spaces]
        names = args.evaluate.split(",")
        if len(names) != mech.n_players:
            raise DomainError(f"--evaluate needs {mech.n_players} type labels")
        try:
            profile = tuple(labels[i].index(x) for i, x in enumerate(names))
        except ValueError as exc:
            raise DomainError(f"unknown type label: {exc}") from None
        outcomes = mechanism.evaluate_mechanism(mechanism.direct_revelation(mech), profile)
        out.write("outcome: " + " ".join(sorted(map(str, outcomes))) + "\n")
    if args.strict and not report.is_ic:
        raise DomainError("mechanism is not incentive compatible")


def cmd_rollover(args, out) -> None:
    old_name = _find_chain(args.dir, args.chain)
    config = _compile(args.spec)
    if config.chain_name == old_name:
        raise DomainError("the successor chain needs a different name from its predecessor")
    _guard_new(args.dir, config.chain_name, args.force)
    chain = rollover_chain(_paths(args.dir, old_name)["blocks"], config)
    save_chain(args.dir, chain)
    out.write(f"created {config.chain_name} predecessor_version_hash {chain.head.predecessor_version_hash.hex()}\n")


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainkit", description="Design, run and inspect simulated blockchains.")
    parser.add_argument("--dir", type=Path, default=Path("."), help="directory holding chain files")
    parser.add_argument("--verbose", action="store_true", help="report timings on stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("create", help="compile a .kl spec and write its genesis")
    p.add_argument("--spec", action="append", required=True, help="source file (repeat for a compilation set)")
    p.add_argument("--force", action="store_true", help="overwrite an existing chain of the same name")
    p.set_defaults(fn=cmd_create)

    p = sub.add_parser("run", help="mine blocks from pending instances")
    p.add_argument("--chain")
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--creator", default="cli")
    p.add_argument("--interval", type=int, default=1, help="timestamp increment per block")
    p.add_argument("--start", type=int, default=0, help="first nonce counter")
    p.add_argument("--limit", type=int, default=None, help="counters to try per block")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("send", help="evaluate a chain interaction such as B1.send(...)")
    p.add_argument("--chain")
    p.add_argument("expr")
    p.set_defaults(fn=cmd_send)

    p = sub.add_parser("query", help="match a triple pattern against the graph snapshot")
    p.add_argument("--chain")
    p.add_argument("-s", help="subject (text or 0x-hex)")
    p.add_argument("-p", help="predicate")
    p.add_argument("-o", help="object")
    p.add_argument("--contains", metavar="HASH", help="is this instance stored on the chain")
    p.add_argument("--include", metavar="CHAINS", help="with --contains: chains whose union is searched")
    p.add_argument("--exclude", metavar="CHAINS", help="with --contains: chains whose members are excluded")
    p.add_argument("--prove", metavar="HASH", help="print and check a Merkle inclusion proof")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("analyze", help="print chain statistics")
    p.add_argument("--chain")
    p.add_argument("--csv", help="also write metric,value CSV here")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("simulate", help="run a multi-node network simulation")
    p.add_argument("--spec", action="append", required=True)
    p.add_argument("--nodes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, default=50)
    p.add_argument("--difficulty", type=int, default=2)
    p.add_argument("--mine-until", type=int, default=None)
    p.add_argument("--hashes-per-tick", type=int, default=8)
    p.add_argument("--events", help="write the JSON-lines event log here")
    p.add_argument("--message", action="append", default=[], metavar="T:NODE:VALUE", help="scripted peer message")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("check-ic", help="certify incentive compatibility of a table mechanism")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--table", help="mechanism table file")
    source.add_argument("--auction", choices=["vickrey", "first-price"], help="built-in sealed-bid auction")
    p.add_argument("--grid", default="1,2,3", help="bid grid for --auction")
    p.add_argument("--players", type=int, default=2, help="bidders for --auction")
    p.add_argument("--dump", help="write the mechanism as a table file")
    p.add_argument("--evaluate", metavar="LABELS", help="outcome for a truthful type profile, e.g. 3,1")
    p.add_argument("--strict", action="store_true", help="exit 1 when the mechanism is not IC")
    p.set_defaults(fn=cmd_check_ic)

    p = sub.add_parser("rollover", help="start a successor chain committing to an old one")
    p.add_argument("--chain", help="old chain name")
    p.add_argument("--spec", action="append", required=True, help="source of the new chain")
    p.add_argument("--force", action="store_true", help="overwrite an existing chain of the same name")
    p.set_defaults(fn=cmd_rollover)
    return parser


_DOMAIN_ERRORS = (
    DomainError,
    InvalidConfig,
    LoweringError,
    ledger.LedgerError,
    mechanism.EnumerationTooLarge,
    UnknownMethod,
    MalformedInstanceLiteral,
    LexError,
    ParseError,
    DecodeError,
    ValueError,
    KeyError,
    OSError,
)


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        args.fn(args, out)
    except _DOMAIN_ERRORS as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        err.write(f"error: {message}\n")
        return 1
    if args.verbose:
        err.write(f"{args.verb} took {time.perf_counter() - started:.3f}s\n")
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()

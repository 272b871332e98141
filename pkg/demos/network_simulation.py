"""Five simulated nodes agree on a chain and shrug off a forged fork.

Run with ``python3 demos/network_simulation.py``.
"""
import dataclasses
import json

from chainkit.core import create_chain
from chainkit.dsl import compilation_set, compile_sources
from chainkit.netsim import SimConfig, Simulation, invalid_fork, rollover_chain


def main() -> None:
    config = compile_sources(compilation_set("election_chain"))
    sim = SimConfig(n_nodes=5, seed=3, duration=100, z_l=2, mine_until=60)
    report = Simulation(config, sim).run()
    print(report.summary(), end="")

    # a fork longer than the honest chain whose second block is invalid
    effective = Simulation(config, sim).config
    genesis = create_chain(effective).blocks[0]
    fork = invalid_fork(effective, genesis, length=report.nodes[0].height + 10, bad_index=2)
    attacked = Simulation(config, dataclasses.replace(sim, block_script=[(5, fork)])).run()
    kinds = [json.loads(e)["kind"] for e in attacked.events]
    print("fork rejections:", kinds.count("REJECT_FORK"), "converged:", attacked.converged)

    # start a successor chain that commits to the old one's block file
    old = Simulation(config, sim)
    old.run()
    successor = rollover_chain(old.nodes[0].chain, dataclasses.replace(config, chain_name="election_v2"))
    print("successor commits to", successor.head.predecessor_version_hash.hex()[:16])


if __name__ == "__main__":
    main()

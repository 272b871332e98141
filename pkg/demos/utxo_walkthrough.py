"""Mint a coin, split it, and prove the spend is committed in its block.

Run with ``python3 demos/utxo_walkthrough.py``.
"""
from chainkit import analytics, ledger, merkle
from chainkit.core import create_chain, instance_hash
from chainkit.encoding import canonical_encode
from chainkit.model import ChainConfig, ChainType, Gender, MechanismRef, RootDef, RootInstance, UtxoOutput


def main() -> None:
    config = ChainConfig(
        "demo",
        chain_type=ChainType.UTXO,
        consensus=MechanismRef("POW", "POW", 1),
        roots=(RootDef("coin"),),
        block_reward=50,
    )
    chain = create_chain(config)
    print("genesis", chain.head_hash.hex()[:16])

    # a standalone female creates value out of thin air (the initial supply)
    coin = RootInstance("coin", Gender.FEMALE, sender="alice", originator="alice", value=10, signature=b"sig")
    chain.pending.append(coin)
    ledger.mine_next_block(chain, "miner", 1)
    h = instance_hash(config, coin)
    print("minted", h.hex()[:16], "stored:", chain.graph.contains(h))

    # a male spends it into two outputs; the missing 1 is the fee
    outs = [UtxoOutput("bob", 6), UtxoOutput("carol", 3)]
    pay = RootInstance(
        "coin",
        Gender.MALE,
        partner_hash=h,
        sender="alice",
        originator="alice",
        params=canonical_encode(outs),
        return_spec=ledger.SPEC_OUTPUTS,
        signature=b"sig",
    )
    chain.pending.append(pay)
    block = ledger.mine_next_block(chain, "miner", 2)

    # replaying the same spend is refused before it reaches a block
    chain.pending.append(pay)
    print("replayed spend included:", bool(ledger.mine_next_block(chain, "miner", 3).all_instances()))

    members = list(block.instances["coin"])
    proof = merkle.prove_inclusion(merkle.build_tree(config, members), members.index(pay))
    print("proof steps", len(proof.path), "verified:", merkle.verify_proof(config, proof))
    print("root matches block:", proof.expected_root == block.root_set[0].commitment)

    held = {}
    for g in chain.world.utxo_set.values():
        held[g.sender] = held.get(g.sender, 0) + g.value
    print("balances", dict(sorted(held.items())))
    print(analytics.text_report(chain), end="")


if __name__ == "__main__":
    main()

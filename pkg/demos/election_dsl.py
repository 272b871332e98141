"""Compile the election chain from source and interact with it.

Run with ``python3 demos/election_dsl.py``.
"""
from chainkit.core import create_chain
from chainkit.dsl import compilation_set, compile_sources, eval_interaction, tokenize, untokenize
from chainkit.ledger import mine_next_block


def main() -> None:
    sources = compilation_set("election_chain")
    for name, text in sources:
        tokens = tokenize(text)
        # trivia is kept, so the token stream prints back the exact source
        assert untokenize(tokens) == text
        print(f"{name}: {len(tokens)} tokens")

    config = compile_sources(sources)
    print("chain", config.chain_name, "consensus", config.consensus.kind)
    for root in config.roots:
        print(f"  root {root.name:<8} {root.instance_type.name}")

    chain = create_chain(config)
    h = eval_interaction(chain, 'election_chain.send(Female(root="ballot", sender="ann", value=1))')
    print("queued ballot", h.hex()[:16])
    mine_next_block(chain, "clerk", 1)
    print("contains:", eval_interaction(chain, f"election_chain.RI.contains(0x{h.hex()})"))
    print("height:", eval_interaction(chain, "election_chain.height()"))


if __name__ == "__main__":
    main()

"""Reference sources shipped with the package.

``LISTINGS`` holds eight snippets of the chain-definition language, stored
byte-for-byte as originally written (inconsistencies included).  Some are
fragments, so :data:`COMPILATION_SETS` groups them with small supporting
sources into complete programs.
"""
from __future__ import annotations

from importlib import resources

__all__ = ["LISTINGS", "SUPPORT", "COMPILATION_SETS", "read_source", "compilation_set"]

LISTINGS = (
    "simple_chain",
    "election_chain",
    "vote_root",
    "vote_aspect",
    "pow_mechanism",
    "say_hello",
    "scalar_compare",
    "on_new_block",
)
SUPPORT = ("election_roots", "voting_host")

COMPILATION_SETS = {
    "simple_chain": ("simple_chain",),
    "election_chain": ("election_chain", "election_roots"),
    "voting_host": (
        "voting_host",
        "vote_root",
        "vote_aspect",
        "pow_mechanism",
        "say_hello",
        "scalar_compare",
        "on_new_block",
    ),
}


def read_source(name: str) -> str:
    return resources.files(__package__).joinpath("corpus").joinpath(f"{name}.kl").read_text(encoding="utf-8")


def compilation_set(name: str) -> list[tuple[str, str]]:
    return [(f"{member}.kl", read_source(member)) for member in COMPILATION_SETS[name]]

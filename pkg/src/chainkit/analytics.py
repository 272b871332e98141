"""Estimators over one or several chains.

Block time is averaged exactly with :class:`fractions.Fraction`; rendering to
six decimals only happens in the text and CSV reports.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import Chain
from .ledger import reward_instance
from .model import ChainType

__all__ = [
    "InsufficientBlocks",
    "ChainStats",
    "average_block_time",
    "inter_economy_contains",
    "chain_stats",
    "format_rational",
    "text_report",
    "csv_report",
]


class InsufficientBlocks(ValueError):
    pass


@dataclass(frozen=True)
class ChainStats:
    block_count: int
    avg_block_time: Fraction | None
    instance_count_per_root: dict[str, int] = field(default_factory=dict)
    total_rewards_issued: int = 0

    @property
    def instance_count(self) -> int:
        return sum(self.instance_count_per_root.values())


def _timestamps(chain_or_blocks) -> list[int]:
    blocks = chain_or_blocks.blocks if isinstance(chain_or_blocks, Chain) else chain_or_blocks
    return [b.timestamp for b in blocks]


def average_block_time(chain: Chain | Sequence) -> Fraction:
    """Mean gap between consecutive block timestamps.

    Accepts a chain, a block list, or a plain list of integer timestamps.
    """
    if isinstance(chain, Chain) or (chain and not isinstance(chain[0], int)):
        ts = _timestamps(chain)
    else:
        ts = list(chain)
    if len(ts) < 2:
        raise InsufficientBlocks("average block time needs at least two blocks")
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    return Fraction(sum(gaps), len(gaps))


def inter_economy_contains(t_hash: bytes, include: Sequence[Chain], exclude: Sequence[Chain] = ()) -> bool:
    """Membership of *t_hash* in the union of *include* minus the union of *exclude*."""
    if any(c.graph.contains(t_hash) for c in exclude):
        return False
    return any(c.graph.contains(t_hash) for c in include)


def _rewards(chain: Chain) -> int:
    cfg = chain.config
    if cfg.block_reward == 0:
        return 0
    total = 0
    for b in chain.blocks[1:]:
        if not b.creator:
            continue
        if cfg.chain_type == ChainType.ACCOUNT or reward_instance(cfg, b) is not None:
            total += cfg.block_reward
    return total


def chain_stats(chain: Chain) -> ChainStats:
    counts = {r.name: 0 for r in chain.config.roots}
    for b in chain.blocks:
        for name, instances in b.instances.items():
            counts[name] = counts.get(name, 0) + len(instances)
    avg = average_block_time(chain) if len(chain.blocks) >= 2 else None
    return ChainStats(len(chain.blocks), avg, counts, _rewards(chain))


def format_rational(x: Fraction | None, places: int = 6) -> str:
    if x is None:
        return "undefined"
    scale = 10**places
    n = abs(x.numerator) * scale
    q, r = divmod(n, x.denominator)
    if 2 * r >= x.denominator:
        q += 1
    sign = "-" if x < 0 and q else ""
    return f"{sign}{q // scale}.{q % scale:0{places}d}"


def _rows(chain: Chain, stats: ChainStats) -> list[tuple[str, str]]:
    rows = [
        ("chain", chain.config.chain_name),
        ("block_count", str(stats.block_count)),
        ("avg_block_time", format_rational(stats.avg_block_time)),
        ("total_rewards_issued", str(stats.total_rewards_issued)),
    ]
    rows += [(f"instances.{name}", str(n)) for name, n in stats.instance_count_per_root.items()]
    return rows


def text_report(chain: Chain) -> str:
    rows = _rows(chain, chain_stats(chain))
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def csv_report(chain: Chain) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    w.writerows(_rows(chain, chain_stats(chain)))
    return buf.getvalue()

"""Mechanism-design primitives and the puzzle-based consensus built on them.

A :class:`FiniteMechanism` is a direct-revelation mechanism over finite type
spaces: every player reports a type (a valuation vector over the outcomes),
the choice table picks an outcome and the payment tables charge each player.
:func:`check_ic` certifies dominant-strategy incentive compatibility by
exhaustive enumeration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .encoding import canonical_encode
from .hashing import DIGEST_SIZE, hash_digest

__all__ = [
    "ProfileOutOfSpace",
    "TooFewBidders",
    "EnumerationTooLarge",
    "UnknownEnvironment",
    "InvalidPuzzle",
    "FiniteMechanism",
    "MessageMechanism",
    "Puzzle",
    "ICViolation",
    "ICReport",
    "social_surplus",
    "inefficient_profiles",
    "direct_revelation",
    "run_vickrey",
    "vickrey_mechanism",
    "first_price_mechanism",
    "check_ic",
    "verify_puzzle",
    "pow_mine_step",
    "mine",
    "evaluate_mechanism",
    "load_table",
    "read_table",
    "dump_table",
]

DEFAULT_ENUMERATION_CAP = 10**6

Profile = tuple[int, ...]


class ProfileOutOfSpace(ValueError):
    pass


class TooFewBidders(ValueError):
    pass


class EnumerationTooLarge(ValueError):
    pass


class UnknownEnvironment(KeyError):
    pass


class InvalidPuzzle(ValueError):
    pass


@dataclass
class FiniteMechanism:
    """Social choice function plus payments over finite type spaces.

    ``type_spaces[i][k]`` is player *i*'s *k*-th possible valuation, a tuple
    giving the value of each entry of ``outcomes``.  Profiles are tuples of
    type indices.  ``winners`` maps an outcome to the players it makes
    winners; if omitted, an integer outcome ``j`` names player ``j``.
    """

    n_players: int
    type_spaces: list[list[tuple[int, ...]]]
    outcomes: list[Hashable]
    choice: dict[Profile, Hashable]
    payments: list[dict[Profile, int]]
    winners: dict[Hashable, frozenset[int]] = field(default_factory=dict)
    type_labels: list[list[str]] | None = None

    def __post_init__(self):
        if self.n_players < 1 or len(self.type_spaces) != self.n_players:
            raise ValueError("one type space per player is required")
        if len(self.payments) != self.n_players:
            raise ValueError("one payment table per player is required")
        for space in self.type_spaces:
            for v in space:
                if len(v) != len(self.outcomes):
                    raise ValueError("every valuation must be total over outcomes")
        if not self.winners:
            self.winners = {
                a: frozenset({a}) if isinstance(a, int) and 0 <= a < self.n_players else frozenset()
                for a in self.outcomes
            }
        self._outcome_index = {a: j for j, a in enumerate(self.outcomes)}
        for profile in self.profiles():
            if profile not in self.choice:
                raise ValueError(f"choice is not total: missing {profile}")
            if self.choice[profile] not in self._outcome_index:
                raise ValueError(f"choice {self.choice[profile]!r} is not an outcome")
            for table in self.payments:
                if profile not in table:
                    raise ValueError(f"payments are not total: missing {profile}")

    @property
    def profile_count(self) -> int:
        return math.prod(len(s) for s in self.type_spaces)

    def profiles(self) -> Iterable[Profile]:
        return itertools.product(*(range(len(s)) for s in self.type_spaces))

    def value(self, player: int, type_index: int, outcome: Hashable) -> int:
        return self.type_spaces[player][type_index][self._outcome_index[outcome]]

    def utility(self, player: int, true_type: int, reported: Profile) -> int:
        a = self.choice[reported]
        return self.value(player, true_type, a) - self.payments[player][reported]

    def check_profile(self, profile: Profile) -> None:
        if len(profile) != self.n_players or any(
            not 0 <= k < len(s) for k, s in zip(profile, self.type_spaces)
        ):
            raise ProfileOutOfSpace(profile)


def social_surplus(mech: FiniteMechanism, profile: Profile) -> int:
    """Sum of the winners' values for the outcome chosen at *profile*."""
    mech.check_profile(profile)
    a = mech.choice[profile]
    won = mech.winners.get(a, frozenset())
    return sum(mech.value(i, profile[i], a) * (1 if i in won else 0) for i in range(mech.n_players))


def _surplus_of(mech: FiniteMechanism, profile: Profile, a: Hashable) -> int:
    won = mech.winners.get(a, frozenset())
    return sum(mech.value(i, profile[i], a) for i in won)


def inefficient_profiles(mech: FiniteMechanism) -> list[Profile]:
    """Profiles where the chosen outcome does not maximise social surplus."""
    out = []
    for prof in mech.profiles():
        best = max(_surplus_of(mech, prof, a) for a in mech.outcomes)
        if social_surplus(mech, prof) < best:
            out.append(prof)
    return out


def run_vickrey(bids: Sequence[int]) -> tuple[int, int]:
    """Second-price sealed-bid auction: ``(winner, price)``, ties to lowest index."""
    if len(bids) < 2:
        raise TooFewBidders("a Vickrey auction needs at least two bids")
    if any(b < 0 for b in bids):
        raise ValueError("bids must be non-negative")
    winner = max(range(len(bids)), key=lambda i: (bids[i], -i))
    price = max(b for i, b in enumerate(bids) if i != winner)
    return winner, price


def _auction(grid: Sequence[int], n: int, price_rule: Callable[[Sequence[int], int], int]) -> FiniteMechanism:
    grid = list(grid)
    outcomes = list(range(n))
    spaces = []
    labels = []
    for i in range(n):
        spaces.append([tuple(b if a == i else 0 for a in outcomes) for b in grid])
        labels.append([str(b) for b in grid])
    choice: dict[Profile, int] = {}
    payments: list[dict[Profile, int]] = [{} for _ in range(n)]
    for profile in itertools.product(range(len(grid)), repeat=n):
        bids = [grid[k] for k in profile]
        winner = max(range(n), key=lambda i: (bids[i], -i))
        choice[profile] = winner
        for i in range(n):
            payments[i][profile] = price_rule(bids, winner) if i == winner else 0
    return FiniteMechanism(n, spaces, outcomes, choice, payments, type_labels=labels)


def vickrey_mechanism(grid: Sequence[int], n: int = 2) -> FiniteMechanism:
    """Second-price auction over the bid *grid* as a finite mechanism."""
    return _auction(grid, n, lambda bids, w: run_vickrey(bids)[1])


def first_price_mechanism(grid: Sequence[int], n: int = 2) -> FiniteMechanism:
    """Pay-your-bid auction over *grid*; not incentive compatible."""
    return _auction(grid, n, lambda bids, w: bids[w])


@dataclass(frozen=True)
class ICViolation:
    player: int
    others: Profile  # v_{-i}, the other players' type indices in player order
    true_type: int
    deviation: int
    utility_truth: int
    utility_deviation: int


@dataclass
class ICReport:
    is_ic: bool
    violations: list[ICViolation]
    # payment depends only on the chosen outcome, for every player and v_{-i}
    taxation_principle: bool

    def summary(self) -> str:
        lines = [f"IC: {'yes' if self.is_ic else 'no'}", f"taxation principle: {'yes' if self.taxation_principle else 'no'}"]
        for v in self.violations:
            lines.append(
                f"violation: player {v.player} others {list(v.others)} true {v.true_type} "
                f"reports {v.deviation}: {v.utility_truth} < {v.utility_deviation}"
            )
        return "\n".join(lines)


def _with(profile_others: Profile, i: int, k: int) -> Profile:
    return profile_others[:i] + (k,) + profile_others[i:]


def check_ic(mech: FiniteMechanism, cap: int = DEFAULT_ENUMERATION_CAP) -> ICReport:
    """Exhaustive dominant-strategy IC check.

    For each player *i*, each report profile of the others, each true type
    and each misreport, compares truthful utility against deviating utility.
    Violations come out in enumeration order.
    """
    if mech.profile_count > cap:
        raise EnumerationTooLarge(f"{mech.profile_count} profiles exceed the cap of {cap}")
    violations = []
    taxation = True
    for i in range(mech.n_players):
        others_spaces = [range(len(s)) for j, s in enumerate(mech.type_spaces) if j != i]
        own = range(len(mech.type_spaces[i]))
        for others in itertools.product(*others_spaces):
            price_for: dict[Hashable, int] = {}
            for k in own:
                prof = _with(others, i, k)
                a = mech.choice[prof]
                p = mech.payments[i][prof]
                if price_for.setdefault(a, p) != p:
                    taxation = False
            for true_k in own:
                truthful = mech.utility(i, true_k, _with(others, i, true_k))
                for dev in own:
                    if dev == true_k:
                        continue
                    deviating = mech.utility(i, true_k, _with(others, i, dev))
                    if truthful < deviating:
                        violations.append(ICViolation(i, others, true_k, dev, truthful, deviating))
    return ICReport(not violations, violations, taxation)


# -- message mechanisms ------------------------------------------------------


@dataclass
class MessageMechanism:
    """Mechanism as message space, equilibrium correspondence and outcome map."""

    message_space: frozenset
    equilibrium: Callable[[Any], Iterable] | Mapping[Any, Iterable]
    outcome_fn: Callable[[Any], Any] | Mapping[Any, Any]
    environments: frozenset | None = None

    def mu(self, theta) -> set:
        if self.environments is not None and theta not in self.environments:
            raise UnknownEnvironment(theta)
        if isinstance(self.equilibrium, Mapping):
            if theta not in self.equilibrium:
                raise UnknownEnvironment(theta)
            msgs = set(self.equilibrium[theta])
        else:
            msgs = set(self.equilibrium(theta))
        stray = msgs - set(self.message_space)
        if stray:
            raise ValueError(f"equilibrium messages outside the message space: {stray}")
        return msgs

    def h(self, m):
        if isinstance(self.outcome_fn, Mapping):
            return self.outcome_fn[m]
        return self.outcome_fn(m)


def direct_revelation(mech: FiniteMechanism) -> MessageMechanism:
    """View *mech* as a message mechanism where players report their types truthfully."""
    profiles = frozenset(mech.profiles())
    return MessageMechanism(profiles, lambda theta: {theta}, mech.choice, environments=profiles)


def evaluate_mechanism(mech: MessageMechanism, theta) -> set:
    """Outcomes ``{h(m) : m in mu(theta)}``."""
    return {mech.h(m) for m in mech.mu(theta)}


# -- puzzles -----------------------------------------------------------------


@dataclass(frozen=True)
class Puzzle:
    target_zeros: int
    payload_binder: bytes

    def __post_init__(self):
        if not 0 <= self.target_zeros <= 2 * DIGEST_SIZE:
            raise InvalidPuzzle(f"target_zeros must lie in [0, {2 * DIGEST_SIZE}]")


def solution_hash(config, puzzle: Puzzle, nonce: bytes) -> str:
    return hash_digest(config, puzzle.payload_binder + nonce).hex()


def verify_puzzle(config, puzzle: Puzzle, nonce: bytes) -> bool:
    """True iff the hex digest of ``binder || nonce`` starts with z_L zeros."""
    z = puzzle.target_zeros
    return solution_hash(config, puzzle, nonce)[:z] == "0" * z


def pow_mine_step(config, header_bytes: bytes, z_l: int, nonce_counter: int) -> bytes | None:
    nonce = canonical_encode(nonce_counter)
    if verify_puzzle(config, Puzzle(z_l, header_bytes), nonce):
        return nonce
    return None


def mine(config, header_bytes: bytes, z_l: int, start: int = 0, limit: int | None = None) -> tuple[int, bytes] | None:
    """Scan counters from *start*; ``(counter, nonce)`` of the first success."""
    counter = start
    while limit is None or counter < start + limit:
        nonce = pow_mine_step(config, header_bytes, z_l, counter)
        if nonce is not None:
            return counter, nonce
        counter += 1
    return None


# -- table files -------------------------------------------------------------
#
#   players 2
#   outcomes 0 1
#   winners 0 : 0            (optional, outcome : player ...)
#   type 0 low 1 0           (player, label, value per outcome)
#   profile low high | 1 | 0 1
#
# Outcome and player tokens that parse as integers are integers.


def _tok(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def read_table(path: str | Path) -> FiniteMechanism:
    return load_table(Path(path).read_text())


def load_table(text: str) -> FiniteMechanism:
    """Parse the plain-text table format shown above."""
    n = None
    outcomes: list = []
    winners: dict = {}
    spaces: list[list[tuple[int, ...]]] = []
    labels: list[list[str]] = []
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "players":
                n = int(rest[0])
                spaces = [[] for _ in range(n)]
                labels = [[] for _ in range(n)]
            elif head == "outcomes":
                outcomes = [_tok(t) for t in rest]
            elif head == "winners":
                a, _, players = " ".join(rest).partition(":")
                winners[_tok(a.strip())] = frozenset(int(p) for p in players.split())
            elif head == "type":
                i, label, *vals = rest
                spaces[int(i)].append(tuple(int(v) for v in vals))
                labels[int(i)].append(label)
            elif head == "profile":
                types, outcome, pays = (part.split() for part in " ".join(rest).split("|"))
                rows.append((types, _tok(outcome[0]), [int(p) for p in pays]))
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if n is None:
        raise ValueError("missing 'players' line")
    choice = {}
    payments: list[dict] = [{} for _ in range(n)]
    for types, outcome, pays in rows:
        profile = tuple(labels[i].index(t) for i, t in enumerate(types))
        choice[profile] = outcome
        for i, p in enumerate(pays):
            payments[i][profile] = p
    return FiniteMechanism(n, spaces, outcomes, choice, payments, winners, labels)


def dump_table(mech: FiniteMechanism) -> str:
    labels = mech.type_labels or [[str(k) for k in range(len(s))] for s in mech.type_spaces]
    lines = [f"players {mech.n_players}", "outcomes " + " ".join(str(a) for a in mech.outcomes)]
    for a, ws in mech.winners.items():
        lines.append(f"winners {a} : " + " ".join(str(p) for p in sorted(ws)))
    for i, space in enumerate(mech.type_spaces):
        for label, v in zip(labels[i], space):
            lines.append(f"type {i} {label} " + " ".join(str(x) for x in v))
    for prof in mech.profiles():
        names = " ".join(labels[i][k] for i, k in enumerate(prof))
        pays = " ".join(str(mech.payments[i][prof]) for i in range(mech.n_players))
        lines.append(f"profile {names} | {mech.choice[prof]} | {pays}")
    return "\n".join(lines) + "\n"

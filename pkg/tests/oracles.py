"""Independent reference computations used to check the library.

Nothing here imports chainkit: each function recomputes its value from
hashlib and plain Python so that a shared bug cannot hide in both places.
"""
import hashlib
import itertools
import struct


def sha256(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


def merkle_root(leaf_payloads, h=sha256):
    """Straight-line Merkle root: leaf H(00||x), node H(01||l||r), odd duplicates."""
    if not leaf_payloads:
        return bytes(32)
    level = [h(b"\x00" + p) for p in leaf_payloads]
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        nxt = []
        for i in range(0, len(level), 2):
            nxt.append(h(b"\x01" + level[i] + level[i + 1]))
        level = nxt
    return level[0]


def merkle_root_of_hashes(leaf_hashes, h=sha256):
    if not leaf_hashes:
        return bytes(32)
    level = list(leaf_hashes)
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [h(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def auction_outcome(bids, rule):
    """Winner (highest bid, lowest index on ties) and the winner's payment."""
    best = max(bids)
    winner = bids.index(best)
    if rule == "second":
        rest = bids[:winner] + bids[winner + 1 :]
        price = max(rest)
    else:
        price = best
    return winner, price


def brute_force_ic_violations(grid, rule, n=2):
    """Four nested loops: player, others' bids, true value, misreport.

    Returns the list of (player, others, true, report) tuples where lying
    strictly beats telling the truth.
    """
    found = []
    for i in range(n):
        for others in itertools.product(grid, repeat=n - 1):
            for true_v in grid:
                for report in grid:
                    if report == true_v:
                        continue

                    def utility(bid):
                        bids = list(others[:i]) + [bid] + list(others[i:])
                        w, price = auction_outcome(bids, rule)
                        return true_v - price if w == i else 0

                    if utility(report) > utility(true_v):
                        found.append((i, others, true_v, report))
    return found


def encode_i64(n: int) -> bytes:
    return struct.pack(">q", n)


def pow_scan(binder: bytes, zeros: int, start=0, limit=10**6):
    """First counter whose nonce encoding makes sha256 hex start with zeros."""
    for c in range(start, start + limit):
        if hashlib.sha256(binder + encode_i64(c)).hexdigest().startswith("0" * zeros):
            return c
    return None


def pow_solutions(binder: bytes, zeros: int, count: int):
    return {
        c for c in range(count) if hashlib.sha256(binder + encode_i64(c)).hexdigest().startswith("0" * zeros)
    }


def shadow_query(triples, s=None, p=None, o=None):
    """Filter-then-sort reference for triple pattern queries."""
    hits = [t for t in triples if (s is None or t[0] == s) and (p is None or t[1] == p) and (o is None or t[2] == o)]
    return sorted(set(hits))


def block_file_records(data: bytes):
    """Split a length-prefixed file; a short or malformed tail is returned apart."""
    out = []
    pos = 0
    while pos + 8 <= len(data):
        n = struct.unpack(">Q", data[pos : pos + 8])[0]
        if pos + 8 + n > len(data):
            break
        out.append(data[pos : pos + 8 + n])
        pos += 8 + n
    return out, data[pos:]


def rollover_root(data: bytes):
    records, tail = block_file_records(data)
    leaves = [sha256(r) for r in records]
    if tail:
        leaves.append(sha256(tail))
    return merkle_root_of_hashes(leaves)

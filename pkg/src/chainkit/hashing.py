from __future__ import annotations

import enum
import hashlib

__all__ = ["HashAlg", "DIGEST_SIZE", "ZERO_HASH", "digest", "hash_digest"]

DIGEST_SIZE = 32
ZERO_HASH = bytes(DIGEST_SIZE)


class HashAlg(enum.IntEnum):
    SHA256 = 0
    SHA3_256 = 1


_CONSTRUCTORS = {
    HashAlg.SHA256: hashlib.sha256,
    HashAlg.SHA3_256: hashlib.sha3_256,
}


def digest(alg: HashAlg, payload: bytes) -> bytes:
    return _CONSTRUCTORS[HashAlg(alg)](payload).digest()


def hash_digest(config, payload: bytes) -> bytes:
    """Digest of *payload* under ``config.hash_alg``."""
    return digest(config.hash_alg, payload)

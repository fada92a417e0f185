"""Deterministic sub-seed derivation.

Retries and per-stage generators need fresh seeds that are reproducible from
a base seed without consuming shared RNG state. Seeds are derived by hashing
the base seed together with string labels, so ``derive_seed(s, "region", 3)``
is stable across processes and platforms.
"""

import hashlib

_MASK31 = 0x7FFFFFFF


def derive_seed(base_seed: int, *labels) -> int:
    """Return a 31-bit seed derived from ``base_seed`` and ``labels``."""
    key = ":".join([str(int(base_seed))] + [str(lab) for lab in labels])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & _MASK31

"""Deterministic seed derivation.

All randomness in the pipeline flows from one root seed. Sub-seeds for
runs, questions, and videos are derived by hashing the root seed together
with a label path, so results never depend on scheduling or iteration
order.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *labels: str | int) -> int:
    """Derive a child seed from a root seed and a label path.

    The same (root, labels) always yields the same non-negative 63-bit
    integer; distinct label paths yield independent streams.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little") & (2**63 - 1)

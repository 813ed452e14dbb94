"""Named sub-stream seed derivation.

All randomness in the pipeline flows from one root seed. Components derive
their own seeds through named paths (e.g. ``("problems", 3)``) so that any
stage can be re-run in isolation and still reproduce exactly.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 63) - 1


def derive_seed(root: int, *path: object) -> int:
    """Derive a deterministic 63-bit sub-seed from ``root`` and a name path.

    Stable across processes and platforms (unlike ``hash()``).
    """
    text = str(int(root)) + "/" + "/".join(str(p) for p in path)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK

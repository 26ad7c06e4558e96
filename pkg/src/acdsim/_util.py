"""Shared helpers: canonical JSON, digests, and derived RNG stream seeds."""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    """Compact JSON with sorted keys; the byte-stable form used for digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def child_seed(seed: int, label: str) -> int:
    """Derive an independent 63-bit stream seed from (seed, label).

    Keeps labelled draw streams (policies, indicator noise) separate from the
    engine's own stream so that replaying a log never depends on them.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1

"""Deterministic seed derivation for named random sub-streams."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a mix of ints and stream-name strings."""
    ints = []
    for part in parts:
        if isinstance(part, str):
            ints.append(zlib.crc32(part.encode("utf-8")))
        else:
            ints.append(int(part) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(ints).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])

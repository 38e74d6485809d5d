"""Labelled random streams.

A stream is fully determined by ``(seed, label)``: the pair is hashed with
SHA-256 into a 128-bit Philox key, so streams never depend on how many
other streams were drawn before them or on which worker draws them.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_NAME = "numpy.random.Philox(key=sha256(seed:label)[:16])"


def stream_key(seed: int, label: str) -> np.ndarray:
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return np.frombuffer(digest[:16], dtype="<u8").copy()


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, label)))

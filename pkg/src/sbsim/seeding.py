"""Deterministic per-subsystem random streams derived from one master seed."""

import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    key = ":".join([str(int(seed))] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def derive_rng(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))

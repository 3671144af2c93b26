"""
Seed derivation.
All randomness flows from one top-level seed; components ask for a named child seed.
"""

import hashlib

import numpy as np


def derive_seed(base_seed, component, index=0):
    """Derive a 32-bit seed from (base seed, component name, index)"""
    token = f"{int(base_seed)}:{component}:{int(index)}".encode('utf-8')
    digest = hashlib.sha256(token).digest()
    return int.from_bytes(digest[:4], 'little')


def make_rng(base_seed, component, index=0):
    """Generator seeded from a derived seed"""
    return np.random.default_rng(derive_seed(base_seed, component, index))

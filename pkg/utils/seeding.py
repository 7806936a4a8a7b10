"""Derived random streams: one run seed, one independent stream per purpose"""

import zlib

import numpy as np


def derive_seed(seed, purpose):
    """Integer seed for the stream named by purpose, e.g. 'scheduler' or 'perturbation'"""
    if int(seed) < 0:
        raise ValueError(f"seed must be >= 0 (got {seed})")
    tag = zlib.crc32(purpose.encode('utf-8'))
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1)[0])

"""Seed derivation.

Every random quantity is drawn from a stream keyed by the master seed and a
tuple of non-negative integers (cell, trial, site...). Streams do not depend on
how trials are split across workers.
"""
import numpy as np

GENERATOR_ID = "numpy PCG64, SeedSequence(master, spawn_key=key)"
COUNTER_ID = "splitmix64 counter hash + Box-Muller (coalescing BM sampler)"


def stream(master, *key):
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def key64(master, *key):
    """A 64-bit integer derived from (master, key), for counter-based kernels."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return ss.generate_state(1, np.uint64)[0]


def zigzag(site):
    """Map a signed site to a non-negative spawn key component."""
    site = int(site)
    return 2 * site if site >= 0 else -2 * site - 1

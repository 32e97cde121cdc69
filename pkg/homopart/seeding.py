"""Labelled, counter-based random streams.

One user seed is split per phase and per item, so a phase can be rerun on its
own and results never depend on the order work is scheduled in.
"""

import zlib

import numpy as np


def phase_key(label):
    return zlib.crc32(label.encode("utf-8"))


def derive_seed_sequence(seed, label, *indices):
    return np.random.SeedSequence(
        int(seed), spawn_key=(phase_key(label),) + tuple(int(i) for i in indices)
    )


def derive_rng(seed, label, *indices):
    """
    Return a generator for ``(seed, label, *indices)``.

    Parameters:
        seed (int): The run seed.
        label (str): Phase name, e.g. ``"anchors"`` or ``"family"``.
        indices (int): Item indices within the phase.

    Returns:
        numpy.random.Generator: A Philox-backed generator.
    """
    return np.random.Generator(np.random.Philox(derive_seed_sequence(seed, label, *indices)))

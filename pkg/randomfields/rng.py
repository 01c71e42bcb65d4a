import numpy as np


def stream_seed(master, *keys):
    """Derive an independent 64-bit seed for the stream addressed by ``keys``."""
    sequence = np.random.SeedSequence([int(master), *[int(key) for key in keys]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))

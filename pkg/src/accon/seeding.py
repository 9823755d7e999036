"""Named random sub-streams derived from one root seed.

Each consumer (data draw, split, init, augmentation, batch order, ...) gets
its own generator so that changing one stage never shifts another; paired
runs that share a root seed therefore share data and initialisation.
"""

import numpy as np

STREAMS = {
    "data": 1,
    "split": 2,
    "init": 3,
    "augment": 4,
    "batch": 5,
    "gradcheck": 6,
    "boundcheck": 7,
    "free": 8,
    "geometry": 9,
}


def substream(seed, name):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name],)))


def subseed(seed, name):
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name],))
    return int(seq.generate_state(1, dtype=np.uint32)[0])

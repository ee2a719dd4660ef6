"""Counter-style RNG derivation for reproducible parallel runs."""

import numpy as np


def rng_from(master_seed, *path):
    """Generator keyed by (master_seed, *path).

    The spawn-key derivation makes streams independent of worker count and
    iteration order, so datasets are byte-identical however they are
    parallelized.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))

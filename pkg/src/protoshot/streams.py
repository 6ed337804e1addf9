"""Deterministic random stream derivation.

Every stochastic routine in this package draws from a generator derived
here. A child stream is addressed by an integer path under a root seed,
and its output is a pure function of ``(seed, path)``: no matter how work
is split across workers, or in which order entities are visited, the same
entity receives the same draws. This is what makes reports byte-identical
for any worker count.

Path layout used across the package (first path element is the domain):

* ``CLASS_MEANS``    - class-mean draws, then block index
* ``CLASS_POINTS``   - per-class point draws, then class index, block index
* ``EPISODES``       - episodic evaluation, then episode index
* ``PAIR_DRAWS``     - Monte Carlo margin sampling, then chunk index
"""

from __future__ import annotations

import numpy as np

CLASS_MEANS = 0
CLASS_POINTS = 1
EPISODES = 2
PAIR_DRAWS = 3

#: Draws per keyed block in range-addressable sampling. Value ``j`` of a
#: stream is found at offset ``j % BLOCK`` of block ``j // BLOCK``, so any
#: contiguous range can be re-generated independently of all others.
BLOCK = 1024


def child_seed(root: int | np.random.SeedSequence, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the child stream addressed by ``path`` under ``root``."""
    if isinstance(root, np.random.SeedSequence):
        entropy, base = root.entropy, tuple(root.spawn_key)
    else:
        entropy, base = int(root), ()
    return np.random.SeedSequence(entropy=entropy, spawn_key=base + tuple(int(p) for p in path))


def child_rng(root: int | np.random.SeedSequence, *path: int) -> np.random.Generator:
    """Generator for the child stream addressed by ``path`` under ``root``."""
    return np.random.default_rng(child_seed(root, *path))


def as_generator(rng: int | np.random.SeedSequence | np.random.Generator) -> np.random.Generator:
    """Coerce a seed, seed sequence, or generator into a generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(np.random.SeedSequence(rng) if isinstance(rng, int) else rng)


def blocked_standard_normal(
    root: int | np.random.SeedSequence,
    path: tuple[int, ...],
    start: int,
    count: int,
    width: int,
) -> np.ndarray:
    """Rows ``start .. start+count`` of an infinite keyed table of N(0,1) draws.

    Row ``j`` is a pure function of ``(root, path, j)``: it is generated at a
    fixed offset inside block ``j // BLOCK``, whose stream is keyed by the
    block index. Disjoint ranges therefore never interact, and concatenating
    two adjacent ranges equals generating the union in one call.
    """
    if count == 0:
        return np.empty((0, width))
    first, last = start // BLOCK, (start + count - 1) // BLOCK
    rows = []
    for block in range(first, last + 1):
        table = child_rng(root, *path, block).standard_normal((BLOCK, width))
        lo = max(start - block * BLOCK, 0)
        hi = min(start + count - block * BLOCK, BLOCK)
        rows.append(table[lo:hi])
    return np.concatenate(rows, axis=0)

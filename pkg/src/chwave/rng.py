"""Counter-based random streams keyed on (master seed, path index).

Every path owns an independent Philox stream.  Increments are drawn in
(step, mode) order, so the value for a given (seed, path, step, mode) never
depends on how many paths run or in which order.
"""

from __future__ import annotations

import numpy as np


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def brownian_increments(master_seed, path_index, n_steps, n_modes, dt, substeps=1):
    """Wiener increments of shape ``(n_steps, n_modes)`` with variance ``dt``.

    The path is drawn on the fine grid ``dt / substeps`` and summed in blocks,
    so a run at ``dt`` with ``substeps=2`` sees exactly the Brownian path of a
    run at ``dt / 2`` with ``substeps=1``.
    """
    if n_modes == 0:
        return np.zeros((n_steps, 0))
    gen = path_generator(master_seed, path_index)
    h = dt / substeps
    fine = gen.standard_normal((n_steps * substeps, n_modes)) * np.sqrt(h)
    return coarsen(fine, substeps)


def coarsen(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments along axis 0."""
    if factor == 1:
        return dW
    n = dW.shape[0] // factor
    return dW[: n * factor].reshape(n, factor, *dW.shape[1:]).sum(axis=1)

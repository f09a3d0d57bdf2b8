import numpy as np
import pytest

from chwave.grid import Grid, Field


def fourier_diff_matrix(n, length):
    """Dense first-derivative collocation matrix for an even number of nodes."""
    h = 2 * np.pi / n
    i = np.arange(n)
    d = np.subtract.outer(i, i)
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** d / np.tan(d * h / 2)
    D[d == 0] = 0.0
    return D * (2 * np.pi / length)


def fourier_diff2_matrix(n, length):
    """Dense second-derivative collocation matrix, Nyquist mode included."""
    h = 2 * np.pi / n
    i = np.arange(n)
    d = np.subtract.outer(i, i)
    with np.errstate(divide="ignore"):
        D2 = -0.5 * (-1.0) ** d / np.sin(d * h / 2) ** 2
    D2[d == 0] = -np.pi**2 / (3 * h**2) - 1 / 6
    return D2 * (2 * np.pi / length) ** 2


@pytest.fixture
def gauss_field():
    def make(n=256, L=40.0, amp=1.0, width=1.0, center=None):
        g = Grid(n, L)
        c = L / 2 if center is None else center
        return Field.from_function(g, lambda x: amp * np.exp(-0.5 * ((x - c) / width) ** 2))
    return make


def lognormal_strong_errors(xi=1.0, s0=-1.0, T=1.0, n_paths=2000, levels=range(6, 13), seed=7):
    """Heun on ds = -xi s o dW against the exact s0 exp(-xi W_T) on nested Brownian paths."""
    from chwave.rng import coarsen
    from chwave.sde import heun_step

    levels = list(levels)
    fine = 2 ** max(levels)
    rng = np.random.default_rng(seed)
    dW_fine = rng.standard_normal((fine, n_paths)) * np.sqrt(T / fine)
    exact = s0 * np.exp(-xi * dW_fine.sum(axis=0))
    dts, errs = [], []
    for lev in levels:
        n = 2 ** lev
        dW = coarsen(dW_fine, fine // n)
        s = np.full(n_paths, s0)
        for i in range(n):
            s = heun_step(lambda y: 0.0 * y, lambda y, w: -xi * y * w, s, T / n, dW[i])
        dts.append(T / n)
        errs.append(np.mean(np.abs(s - exact)))
    return np.array(dts), np.array(errs)

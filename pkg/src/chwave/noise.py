"""Spatial correlation functions xi^i(x) of the transport noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .grid import Field, Grid, derivative_hat


@dataclass(frozen=True)
class Constant:
    c: float

    def derivatives(self, x, orders=(0, 1, 2, 3)):
        x = np.asarray(x, dtype=float)
        return [np.full_like(x, self.c) if k == 0 else np.zeros_like(x) for k in orders]

    @property
    def is_zero(self):
        return self.c == 0.0


@dataclass(frozen=True)
class Exponential:
    """xi(x) = C + A e^x + B e^-x, the non-constant isospectral family."""

    C: float
    A: float
    B: float

    def derivatives(self, x, orders=(0, 1, 2, 3)):
        x = np.asarray(x, dtype=float)
        ep, em = self.A * np.exp(x), self.B * np.exp(-x)
        out = []
        for k in orders:
            if k == 0:
                out.append(self.C + ep + em)
            else:
                out.append(ep + (-1) ** k * em)
        return out

    @property
    def is_zero(self):
        return self.C == 0.0 and self.A == 0.0 and self.B == 0.0


@dataclass(frozen=True)
class Sampled:
    """Grid-sampled correlation function; evaluated off-grid by Fourier interpolation."""

    field: Field

    def grid_derivatives(self, grid: Grid, orders=(0, 1, 2, 3)):
        if grid != self.field.grid:
            raise ValueError("sampled noise mode lives on a different grid")
        fh = self.field.spectral
        return [self.field.values.copy() if k == 0 else
                np.fft.irfft(derivative_hat(grid, fh, k), grid.n) for k in orders]

    def derivatives(self, x, orders=(0, 1, 2, 3)):
        grid = self.field.grid
        x = np.asarray(x, dtype=float)
        coeffs = self.field.spectral / grid.n
        coeffs[1:-1] *= 2.0
        coeffs[-1] = 0.0
        phase = np.exp(1j * np.multiply.outer(x % grid.length, grid.k))
        return [np.real(phase @ ((1j * grid.k) ** k * coeffs)) for k in orders]

    @property
    def is_zero(self):
        return not np.any(self.field.values)


Mode = Union[Constant, Exponential, Sampled]


@dataclass(frozen=True)
class NoiseBasis:
    modes: tuple = field(default_factory=tuple)
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def is_trivial(self) -> bool:
        """No noise at all: disabled, empty, or every mode identically zero."""
        return (not self.enabled) or all(m.is_zero for m in self.modes)

    @property
    def all_constant(self) -> bool:
        return all(isinstance(m, Constant) for m in self.modes)

    @property
    def xi_norm(self) -> float:
        """Root of sum_i (xi^i)^2 for constant modes."""
        if not self.all_constant:
            raise ValueError("xi_norm is only defined for constant modes")
        return float(np.sqrt(sum(m.c**2 for m in self.modes)))

    def grid_derivatives(self, mode: Mode, grid: Grid):
        if isinstance(mode, Sampled):
            return mode.grid_derivatives(grid)
        return mode.derivatives(grid.x)

    def evaluate(self, x, order=0):
        """Array ``(n_modes, len(x))`` of the ``order``-th derivatives at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.modes:
            return np.zeros((0, len(x)))
        return np.array([m.derivatives(x, (order,))[0] for m in self.modes])

"""Periodic grid, Fourier collocation operators and the integral functionals.

All transforms are real FFTs of length ``n``.  Quadratic products are formed on
a 3/2-padded grid so that they are alias free; together with the Galerkin
truncation this makes the discrete Hamiltonian an exact invariant of the
semi-discrete CH flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DiagnosticsError


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` nodes on ``[0, length)``."""

    n: int
    length: float

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.n!r}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"domain length must be positive, got {self.length!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*j/L of the rfft layout."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)

    @cached_property
    def k_odd(self) -> np.ndarray:
        # odd derivatives drop the Nyquist mode to keep real fields real
        k = self.k.copy()
        k[-1] = 0.0
        return k

    @cached_property
    def helmholtz_symbol(self) -> np.ndarray:
        return 1.0 / (1.0 + self.k**2)

    @property
    def n_padded(self) -> int:
        return 3 * self.n // 2

    def periodic_distance(self, a, b):
        """Signed shortest displacement ``b - a`` on the circle."""
        L = self.length
        return (np.asarray(b) - np.asarray(a) + 0.5 * L) % L - 0.5 * L


@dataclass(frozen=True)
class Field:
    """Real samples of a function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"field has shape {v.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(v)):
            raise DiagnosticsError("field contains non-finite samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, func(grid.x))

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray) -> "Field":
        return cls(grid, np.fft.irfft(coeffs, grid.n))

    def like(self, values) -> "Field":
        return Field(self.grid, values)

    @property
    def spectral(self) -> np.ndarray:
        return np.fft.rfft(self.values)

    def __len__(self):
        return self.grid.n


# spectral-space kernels -------------------------------------------------------

def derivative_hat(grid: Grid, f_hat: np.ndarray, order: int = 1) -> np.ndarray:
    k = grid.k_odd if order % 2 else grid.k
    return (1j * k) ** order * f_hat


def to_padded(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """Physical samples of ``f`` on the 3/2-refined grid."""
    n, m = grid.n, grid.n_padded
    buf = np.zeros(m // 2 + 1, dtype=complex)
    buf[: n // 2] = f_hat[: n // 2]
    return np.fft.irfft(buf, m) * (m / n)


def from_padded(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Truncate padded physical samples back to the ``n``-mode spectrum."""
    n, m = grid.n, grid.n_padded
    out = np.fft.rfft(values)[: n // 2 + 1] * (n / m)
    out[-1] = 0.0
    return out


def padded_product(grid: Grid, a_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    return from_padded(grid, to_padded(grid, a_hat) * to_padded(grid, b_hat))


# public field operations ----------------------------------------------------

def _check_finite(f: Field):
    if not np.all(np.isfinite(f.values)):
        raise DiagnosticsError("non-finite field")


def spectral_derivative(f: Field, order: int = 1) -> Field:
    """Fourier-collocation derivative of ``f``."""
    _check_finite(f)
    return Field.from_spectral(f.grid, derivative_hat(f.grid, f.spectral, order))


def helmholtz_invert(m: Field) -> Field:
    """Solve ``(1 - d^2/dx^2) u = m`` on the periodic grid.

    Equivalent to periodic convolution of ``m`` with the Green's function
    ``cosh(|x| - L/2) / (2 sinh(L/2))``.
    """
    _check_finite(m)
    return Field.from_spectral(m.grid, m.grid.helmholtz_symbol * m.spectral)


def helmholtz_apply(u: Field) -> Field:
    """Momentum ``m = u - u_xx``."""
    _check_finite(u)
    return Field.from_spectral(u.grid, (1.0 + u.grid.k**2) * u.spectral)


def dealiased_product(a: Field, b: Field) -> Field:
    return Field.from_spectral(a.grid, padded_product(a.grid, a.spectral, b.spectral))


def integrate(f: Field) -> float:
    """Spectral quadrature: exact for trigonometric polynomials."""
    return float(np.mean(f.values) * f.grid.length)


def _u_and_ux(u: Field):
    ux = np.fft.irfft(derivative_hat(u.grid, u.spectral), u.grid.n)
    return u.values, ux


def norm_12(u: Field) -> float:
    """int u^2 + u_x^2 / 2 dx."""
    v, vx = _u_and_ux(u)
    return float(np.mean(v * v + 0.5 * vx * vx) * u.grid.length)


def hamiltonian_h(u: Field) -> float:
    """CH Hamiltonian, one half of int u^2 + u_x^2 dx."""
    v, vx = _u_and_ux(u)
    return float(0.5 * np.mean(v * v + vx * vx) * u.grid.length)


def sup_norm(u: Field) -> float:
    return float(np.max(np.abs(u.values)))


def steepening_constant(u: Field) -> float:
    """Squared sup norm, the constant that bounds u^2 in the slope inequality."""
    return sup_norm(u) ** 2


def momentum_total(m: Field) -> float:
    return integrate(m)


# persistence ------------------------------------------------------------------

def write_csv(f: Field, path) -> None:
    data = np.column_stack([f.grid.x, f.values])
    np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")


def read_csv(path, length: float | None = None) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x, v = data[:, 0], data[:, 1]
    n = len(v)
    if length is None:
        length = (x[1] - x[0]) * n
    return Field(Grid(n, length), v)


def write_binary(f: Field, path) -> None:
    f.values.astype("<f8").tofile(path)


def read_binary(path, grid: Grid) -> Field:
    v = np.fromfile(Path(path), dtype="<f8")
    return Field(grid, v)

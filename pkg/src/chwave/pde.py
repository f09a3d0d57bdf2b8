"""Deterministic and stochastic Camassa-Holm evolution in advective form.

    u_t + u u_x = -d/dx K*(u^2 + u_x^2/2)
    du + u u_x dt = -d/dx K*(u^2 + u_x^2/2) dt - sum_i A^i(u) o dW^i

The state is advanced in Fourier space.  Deterministic runs use classical RK4;
stochastic runs use a Stratonovich Heun step for the drift and for
position-dependent noise modes, while constant modes (pure transport) are
applied as an exact spectral shift split symmetrically around the Heun step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import CFLError, ConfigError, IntegrationError
from .grid import Field, Grid, derivative_hat, from_padded, to_padded
from .noise import Constant, Exponential, NoiseBasis, Sampled
from .sde import heun_step, rk4_step

CFL = 0.5


# spectral-space kernels -------------------------------------------------------

def _rhs_hat(grid: Grid, uh: np.ndarray) -> np.ndarray:
    up = to_padded(grid, uh)
    uxp = to_padded(grid, derivative_hat(grid, uh))
    transport = from_padded(grid, up * uxp)
    source = from_padded(grid, up * up + 0.5 * uxp * uxp)
    return -transport - 1j * grid.k_odd * grid.helmholtz_symbol * source


def _rfft_clean(v):
    out = np.fft.rfft(v)
    out[-1] = 0.0
    return out


def _A_hat(grid, uh, xi, xi_x, xi_xx):
    # products with the fixed correlation function are linear in u and formed pointwise
    u = np.fft.irfft(uh, grid.n)
    ux = np.fft.irfft(derivative_hat(grid, uh), grid.n)
    smoothed = grid.helmholtz_symbol * _rfft_clean(ux * xi_xx + 2.0 * u * xi_x)
    return _rfft_clean(ux * xi) - smoothed


def _B_hat(grid, uh, xi_x, xi_xx, xi_xxx):
    u = np.fft.irfft(uh, grid.n)
    a = _rfft_clean(u * xi_xx)
    b = _rfft_clean(u * xi_xxx + 2.0 * u * xi_x)
    sym = grid.helmholtz_symbol
    return -a + sym * a - 1j * grid.k_odd * sym * b


def _shift_hat(grid, uh, shift):
    """Translate by ``shift``: u(x) -> u(x - shift)."""
    out = uh * np.exp(-1j * grid.k * shift)
    out[-1] = out[-1].real
    return out


# public operators -------------------------------------------------------------

def advective_rhs(u: Field) -> Field:
    """Drift of the CH equation, ``-u u_x - d/dx K*(u^2 + u_x^2/2)``."""
    out = _rhs_hat(u.grid, u.spectral)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite drift")
    return Field.from_spectral(u.grid, out)


def noise_operator_A(u: Field, mode) -> Field:
    """A(u) = u_x xi - K*(u_x xi_xx + 2 u xi_x)."""
    grid = u.grid
    if isinstance(mode, Constant):
        return Field.from_spectral(grid, mode.c * derivative_hat(grid, u.spectral))
    xi, xi_x, xi_xx, _ = _mode_arrays(mode, grid)
    return Field.from_spectral(grid, _A_hat(grid, u.spectral, xi, xi_x, xi_xx))


def noise_operator_B(u: Field, mode) -> Field:
    """B(u) = -u xi_xx + K*(u xi_xx) - d/dx K*(u xi_xxx + 2 u xi_x); zero for constant xi."""
    grid = u.grid
    if isinstance(mode, Constant):
        return Field(grid, np.zeros(grid.n))
    _, xi_x, xi_xx, xi_xxx = _mode_arrays(mode, grid)
    return Field.from_spectral(grid, _B_hat(grid, u.spectral, xi_x, xi_xx, xi_xxx))


def _mode_arrays(mode, grid):
    if isinstance(mode, Sampled):
        return mode.grid_derivatives(grid)
    return mode.derivatives(grid.x)


def max_stable_dt(u: Field, cfl: float = CFL) -> float:
    return cfl * u.grid.dx / max(1.0, float(np.max(np.abs(u.values))))


def _check_cfl(u: Field, dt, cfl=CFL):
    limit = max_stable_dt(u, cfl)
    if dt > limit * (1 + 1e-12):
        raise CFLError(dt, limit)


def step_deterministic(u: Field, dt: float, cfl: float = CFL) -> Field:
    """One classical RK4 step of the CH equation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_cfl(u, dt, cfl)
    grid = u.grid
    uh = rk4_step(lambda y: _rhs_hat(grid, y), u.spectral, dt)
    if not np.all(np.isfinite(uh)):
        raise IntegrationError("non-finite state after deterministic step")
    return Field.from_spectral(grid, uh)


class _StochasticStepper:
    """Pre-computes the correlation-function samples for repeated steps."""

    def __init__(self, grid: Grid, noise: NoiseBasis):
        self.grid = grid
        self.const_idx = [i for i, m in enumerate(noise.modes) if isinstance(m, Constant)]
        self.const_c = np.array([noise.modes[i].c for i in self.const_idx])
        self.other = [(i, _mode_arrays(m, grid)[:3]) for i, m in enumerate(noise.modes)
                      if not isinstance(m, Constant)]

    def drift(self, uh):
        return _rhs_hat(self.grid, uh)

    def noise(self, uh, dW):
        out = np.zeros_like(uh)
        for i, (xi, xi_x, xi_xx) in self.other:
            if dW[i] != 0.0:
                out -= dW[i] * _A_hat(self.grid, uh, xi, xi_x, xi_xx)
        return out

    def step(self, uh, dt, dW):
        dW = np.asarray(dW, dtype=float)
        shift = float(self.const_c @ dW[self.const_idx]) if self.const_idx else 0.0
        if shift != 0.0:
            uh = _shift_hat(self.grid, uh, 0.5 * shift)
        uh = heun_step(self.drift, self.noise, uh, dt, dW)
        if shift != 0.0:
            uh = _shift_hat(self.grid, uh, 0.5 * shift)
        return uh


def step_stochastic(u: Field, dt: float, dW, noise: NoiseBasis, cfl: float = CFL) -> Field:
    """One Stratonovich step of the SCH equation with increments ``dW`` (one per mode).

    With every increment zero this is exactly a deterministic Heun step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_cfl(u, dt, cfl)
    if len(np.atleast_1d(dW)) != noise.n_modes:
        raise ValueError(f"expected {noise.n_modes} increments, got {len(np.atleast_1d(dW))}")
    uh = _StochasticStepper(u.grid, noise).step(u.spectral, dt, np.atleast_1d(dW))
    if not np.all(np.isfinite(uh)):
        raise IntegrationError("non-finite state after stochastic step")
    return Field.from_spectral(u.grid, uh)


# simulation driver ------------------------------------------------------------

DIAGNOSTIC_COLUMNS = ("t", "h", "norm12", "momentum", "supu", "supux", "broken")


@dataclass
class SimulationConfig:
    u0: Field
    dt: float
    T: float
    output_stride: int = 1
    noise: NoiseBasis = field(default_factory=NoiseBasis)
    blowup_threshold: float = 1e3
    substeps: int = 1
    cfl: float = CFL

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def validate(self):
        problems = []
        if not self.dt > 0:
            problems.append("time.dt: must be positive")
        if not self.T > 0:
            problems.append("time.T: must be positive")
        if self.dt > 0 and self.T > 0 and abs(self.n_steps * self.dt - self.T) > 1e-9 * self.T:
            problems.append("time.T: must be an integer multiple of time.dt")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            problems.append("time.output_stride: must be a positive integer")
        if not self.blowup_threshold > 0:
            problems.append("tracking.blowup_threshold: must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            problems.append("noise.substeps: must be a positive integer")
        for i, m in enumerate(self.noise.modes):
            if isinstance(m, Exponential) and (m.A != 0.0 or m.B != 0.0):
                problems.append(f"noise.modes[{i}]: exponential modes are not periodic and "
                                "cannot drive a periodic evolution")
            if isinstance(m, Sampled) and m.field.grid != self.u0.grid:
                problems.append(f"noise.modes[{i}]: sampled mode grid differs from the domain")
        if self.dt > 0:
            limit = max_stable_dt(self.u0, self.cfl)
            if self.dt > limit * (1 + 1e-12):
                problems.append(f"time.dt: violates CFL bound, use dt <= {limit:.6g}")
        if problems:
            raise ConfigError(problems)


@dataclass
class Trajectory:
    grid: Grid
    dt: float
    times: np.ndarray
    snapshots: np.ndarray
    diagnostics: dict
    increments: np.ndarray
    broken: bool
    t_stop: float
    seed: int = 0
    path_index: int = 0

    @property
    def final(self) -> Field:
        return Field(self.grid, self.snapshots[-1])

    def field_at(self, i) -> Field:
        return Field(self.grid, self.snapshots[i])

    def diagnostics_rows(self):
        cols = [self.diagnostics[c] for c in DIAGNOSTIC_COLUMNS]
        return list(zip(*cols))


def _diagnostics(grid: Grid, uh: np.ndarray):
    u = np.fft.irfft(uh, grid.n)
    ux = np.fft.irfft(derivative_hat(grid, uh), grid.n)
    L = grid.length
    return u, dict(
        h=0.5 * L * float(np.mean(u * u + ux * ux)),
        norm12=L * float(np.mean(u * u + 0.5 * ux * ux)),
        momentum=L * float(np.mean(u)),
        supu=float(np.max(np.abs(u))),
        supux=float(np.max(np.abs(ux))),
    )


def simulate(cfg: SimulationConfig, seed: int = 0, path_index: int = 0,
             increments: np.ndarray | None = None) -> Trajectory:
    """Integrate from ``cfg.u0`` to ``cfg.T``, recording every ``output_stride`` steps.

    Brownian increments come from the (seed, path_index) stream unless given
    explicitly (replay).  The run stops early, flagged broken, on a non-finite
    state or when sup|u_x| exceeds ``cfg.blowup_threshold``.
    """
    cfg.validate()
    grid = cfg.u0.grid
    n_steps, dt = cfg.n_steps, cfg.dt
    noisy = not cfg.noise.is_trivial
    n_modes = cfg.noise.n_modes if noisy else 0
    if increments is None:
        increments = _rng.brownian_increments(seed, path_index, n_steps, n_modes, dt, cfg.substeps)
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (n_steps, n_modes):
        raise ValueError(f"increments must have shape {(n_steps, n_modes)}, got {increments.shape}")

    if noisy:
        stepper = _StochasticStepper(grid, cfg.noise)
        advance = lambda uh, i: stepper.step(uh, dt, increments[i])  # noqa: E731
    else:
        drift = lambda y: _rhs_hat(grid, y)  # noqa: E731
        advance = lambda uh, i: rk4_step(drift, uh, dt)  # noqa: E731

    times, snaps = [], []
    diag = {c: [] for c in DIAGNOSTIC_COLUMNS}

    def record(t, uh, broken=False):
        u, d = _diagnostics(grid, uh)
        times.append(t)
        snaps.append(u)
        diag["t"].append(t)
        for key, val in d.items():
            diag[key].append(val)
        diag["broken"].append(int(broken))
        return d

    uh = cfg.u0.spectral
    record(0.0, uh)
    broken = False
    t_stop = n_steps * dt
    for i in range(n_steps):
        new = advance(uh, i)
        t = (i + 1) * dt
        if not np.all(np.isfinite(new)):
            broken, t_stop = True, i * dt
            if times[-1] == t_stop:
                diag["broken"][-1] = 1
            else:
                record(t_stop, uh, broken=True)
            break
        uh = new
        supux = float(np.max(np.abs(np.fft.irfft(derivative_hat(grid, uh), grid.n))))
        if supux > cfg.blowup_threshold:
            broken, t_stop = True, t
            record(t, uh, broken=True)
            break
        if (i + 1) % cfg.output_stride == 0 or i + 1 == n_steps:
            d = record(t, uh)
            if dt > cfg.cfl * grid.dx / max(1.0, d["supu"]) * (1 + 1e-12):
                raise IntegrationError(
                    f"CFL bound violated as sup|u| grew to {d['supu']:.4g}; "
                    f"use dt <= {cfg.cfl * grid.dx / max(1.0, d['supu']):.4g}", step=i + 1)

    return Trajectory(
        grid=grid, dt=dt, times=np.array(times), snapshots=np.array(snaps),
        diagnostics={k: np.array(v) for k, v in diag.items()},
        increments=increments, broken=broken, t_stop=t_stop,
        seed=seed, path_index=path_index,
    )


def write_diagnostics_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for row in traj.diagnostics_rows():
            w.writerow([repr(int(v)) if c == "broken" else format(float(v), ".17g")
                        for c, v in zip(DIAGNOSTIC_COLUMNS, row)])

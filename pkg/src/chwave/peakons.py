"""Canonical Hamiltonian dynamics of M peakons on the real line.

    u(x) = 1/2 sum_b p_b exp(-|x - q_b|)
    H    = 1/4 sum_ab p_a p_b exp(-|q_a - q_b|)
    dq_a = u(q_a) dt + sum_i xi^i(q_a) o dW^i
    dp_a = -p_a u_x(q_a) dt - p_a sum_i xi^i_x(q_a) o dW^i

The derivative of |x| at 0 is taken as 0, so a peakon exerts no force on
itself; collisions are not regularized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import IntegrationError
from .noise import NoiseBasis
from .sde import heun_step, rk4_step


@dataclass(frozen=True)
class PeakonState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if q.ndim != 1 or q.shape != p.shape or len(q) < 1:
            raise ValueError("q and p must be equal-length 1-d arrays with at least one peakon")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise IntegrationError("non-finite peakon state")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def M(self) -> int:
        return len(self.q)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, y) -> "PeakonState":
        M = len(y) // 2
        return cls(y[:M], y[M:])


def velocity_at(state: PeakonState, x):
    """Velocity of the peakon train at positions ``x`` (line kernel)."""
    x = np.asarray(x, dtype=float)
    d = np.abs(np.subtract.outer(x, state.q))
    return 0.5 * np.exp(-d) @ state.p


def slope_at(state: PeakonState, x):
    """u_x with the sgn(0) = 0 convention at the peaks."""
    x = np.asarray(x, dtype=float)
    d = np.subtract.outer(x, state.q)
    return -0.5 * (np.sign(d) * np.exp(-np.abs(d))) @ state.p


def peakon_hamiltonian(state: PeakonState) -> float:
    q, p = state.q, state.p
    return 0.25 * float(p @ np.exp(-np.abs(np.subtract.outer(q, q))) @ p)


def _drift_vec(y):
    M = len(y) // 2
    q, p = y[:M], y[M:]
    d = np.subtract.outer(q, q)
    e = np.exp(-np.abs(d))
    dq = 0.5 * e @ p
    dp = 0.5 * p * ((np.sign(d) * e) @ p)
    return np.concatenate([dq, dp])


def peakon_drift(state: PeakonState):
    """Deterministic drift ``(dq, dp)`` of the canonical equations."""
    v = _drift_vec(state.as_vector())
    return v[: state.M], v[state.M:]


def _noise_fn(noise: NoiseBasis):
    def g(y, dW):
        M = len(y) // 2
        q, p = y[:M], y[M:]
        xi = noise.evaluate(q, 0)
        xi_x = noise.evaluate(q, 1)
        return np.concatenate([dW @ xi, -p * (dW @ xi_x)])
    return g


def step_deterministic(state: PeakonState, dt: float) -> PeakonState:
    """One RK4 step."""
    y = rk4_step(_drift_vec, state.as_vector(), dt)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite peakon state; reduce dt")
    return PeakonState.from_vector(y)


def step_stochastic(state: PeakonState, dt: float, dW, noise: NoiseBasis) -> PeakonState:
    """One Stratonovich Heun step; ``dW`` holds one increment per noise mode."""
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if len(dW) != noise.n_modes:
        raise ValueError(f"expected {noise.n_modes} increments, got {len(dW)}")
    y = heun_step(_drift_vec, _noise_fn(noise), state.as_vector(), dt, dW)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite peakon state; reduce dt")
    return PeakonState.from_vector(y)


@dataclass
class PeakonTrajectory:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    hamiltonian: np.ndarray
    increments: np.ndarray

    def state(self, i) -> PeakonState:
        return PeakonState(self.q[i], self.p[i])


def simulate_peakons(state: PeakonState, dt: float, T: float, noise: NoiseBasis | None = None,
                     seed: int = 0, path_index: int = 0, output_stride: int = 1,
                     increments=None) -> PeakonTrajectory:
    """RK4 without noise, Heun with it."""
    n_steps = int(round(T / dt))
    noisy = noise is not None and not noise.is_trivial
    n_modes = noise.n_modes if noisy else 0
    if increments is None:
        increments = _rng.brownian_increments(seed, path_index, n_steps, n_modes, dt)
    times, qs, ps, hs = [0.0], [state.q], [state.p], [peakon_hamiltonian(state)]
    for i in range(n_steps):
        if noisy:
            state = step_stochastic(state, dt, increments[i], noise)
        else:
            state = step_deterministic(state, dt)
        if (i + 1) % output_stride == 0 or i + 1 == n_steps:
            times.append((i + 1) * dt)
            qs.append(state.q)
            ps.append(state.p)
            hs.append(peakon_hamiltonian(state))
    return PeakonTrajectory(np.array(times), np.array(qs), np.array(ps), np.array(hs),
                            np.asarray(increments))


def write_peakon_csv(traj: PeakonTrajectory, path) -> None:
    M = traj.q.shape[1]
    header = ["t"] + [f"q{a + 1}" for a in range(M)] + [f"p{a + 1}" for a in range(M)] + ["H"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, q, p, h in zip(traj.times, traj.q, traj.p, traj.hamiltonian):
            w.writerow([format(float(v), ".17g") for v in (t, *q, *p, h)])

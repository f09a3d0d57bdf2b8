"""Spectral problem psi_xx = (1/4 - m/(2 lambda)) psi and emergent peak speeds.

On the periodic grid the problem is discretized with second-order central
differences and solved as the symmetric-definite pencil

    diag(m) psi = 2 lambda (1/4 - D2) psi,

whose right-hand matrix is positive definite for every m, so the eigenvalues
are real even when m changes sign.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.signal import find_peaks

from .errors import IndefiniteWeight, NoSpectrum, PeaksNotSeparated
from .grid import Field, Grid, helmholtz_apply


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    n_grid: int
    indefinite: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"eigenvalues": [float(v) for v in self.eigenvalues],
                       "n_grid": self.n_grid, "indefinite": self.indefinite,
                       "diagnostics": self.diagnostics}, fh, indent=2)


def _operator(grid: Grid) -> np.ndarray:
    n = grid.n
    A = np.diag(np.full(n, 0.25 + 2.0 / grid.dx**2))
    off = -1.0 / grid.dx**2
    i = np.arange(n)
    A[i, (i + 1) % n] += off
    A[i, (i - 1) % n] += off
    return A


def ch_spectrum(m: Field, k_max: int = 3, atol: float = 1e-12) -> SpectrumResult:
    """The ``k_max`` largest eigenvalues lambda for momentum ``m``, descending."""
    v = np.asarray(m.values, dtype=float)
    n = m.grid.n
    if not 1 <= k_max <= n:
        raise ValueError(f"k_max must lie in [1, {n}]")
    scale = float(np.max(np.abs(v)))
    if scale <= atol:
        raise NoSpectrum("momentum vanishes identically")
    indefinite = bool(v.min() < 0.0 < v.max())
    if indefinite:
        warnings.warn("momentum changes sign; eigenvalues are computed from the "
                      "definite pencil without symmetrization", IndefiniteWeight, stacklevel=2)
    A = _operator(m.grid)
    w = eigh(np.diag(v), A, eigvals_only=True, subset_by_index=[n - k_max, n - 1])
    lam = 0.5 * w[::-1]
    diag = {"min_m": float(v.min()), "max_m": float(v.max()),
            "negative_fraction": float(np.mean(v < 0.0))}
    return SpectrumResult(lam, n, indefinite, diag)


def momentum_of(u: Field) -> Field:
    return helmholtz_apply(u)


def isospectral_drift(traj, k_max: int = 3) -> np.ndarray:
    """max_k |lambda_k(t)/lambda_k(0) - 1| for each stored snapshot."""
    ref = None
    out = []
    for i in range(len(traj.times)):
        lam = ch_spectrum(momentum_of(traj.field_at(i)), k_max).eigenvalues
        if ref is None:
            ref = lam
        out.append(float(np.max(np.abs(lam / ref - 1.0))))
    return np.array(out)


# emergent peaks --------------------------------------------------------------

def _maxima(u: Field, rel_prominence: float):
    """Local maxima (positions, heights) with sub-grid quadratic refinement."""
    v = u.values
    grid = u.grid
    shift = int(np.argmin(v))
    r = np.roll(v, -shift)
    idx, _ = find_peaks(r, prominence=rel_prominence * float(np.ptp(v)))
    idx = (idx + shift) % grid.n
    ym, y0, yp = v[(idx - 1) % grid.n], v[idx], v[(idx + 1) % grid.n]
    den = ym - 2.0 * y0 + yp
    off = np.where(den < 0, 0.5 * (ym - yp) / np.where(den < 0, den, 1.0), 0.0)
    pos = (grid.x[idx] + off * grid.dx) % grid.length
    height = y0 - 0.25 * (ym - yp) * off
    return pos, height


def count_peaks(u: Field, rel_prominence: float = 0.03) -> int:
    """Number of local maxima whose prominence exceeds ``rel_prominence * ptp(u)``."""
    return len(_maxima(u, rel_prominence)[0])


def emergent_peaks(traj, n_peaks: int, n_late: int | None = None,
                   rel_prominence: float = 0.03):
    """Speeds and final heights of the ``n_peaks`` tallest maxima over late snapshots.

    The last ``n_late`` snapshots (default: the final quarter, at least 10) are
    used.  Peaks are ordered by height at the first late snapshot and followed
    by nearest-neighbour continuity; positions are unwrapped periodically and
    the speed is the least-squares slope.
    """
    n_snap = len(traj.times)
    if n_late is None:
        n_late = max(10, n_snap // 4)
    if n_late < 10 or n_late > n_snap:
        raise ValueError(f"need between 10 and {n_snap} late snapshots, got {n_late}")
    grid = traj.grid
    first = n_snap - n_late
    tracks = None
    heights = None
    for i in range(first, n_snap):
        pos, h = _maxima(traj.field_at(i), rel_prominence)
        if len(pos) < n_peaks:
            raise PeaksNotSeparated(f"only {len(pos)} maxima at t={traj.times[i]:.4g}")
        if tracks is None:
            order = np.argsort(h)[::-1][:n_peaks]
            chosen = pos[order]
            if n_peaks > 1:
                gaps = np.abs(grid.periodic_distance(chosen[:, None], chosen[None, :]))
                gaps[np.diag_indices(n_peaks)] = np.inf
                if gaps.min() < 5 * grid.dx:
                    raise PeaksNotSeparated("maxima closer than 5 grid cells")
            tracks = [[c] for c in chosen]
            last = chosen.copy()
            heights = h[order]
            continue
        for j in range(n_peaks):
            d = grid.periodic_distance(last[j], pos)
            k = int(np.argmin(np.abs(d)))
            tracks[j].append(tracks[j][-1] + d[k])
            last[j] = pos[k]
            heights[j] = h[k]
    t = traj.times[first:]
    speeds = np.array([np.polyfit(t, np.array(tr), 1)[0] for tr in tracks])
    return speeds, heights


def emergent_speeds(traj, n_peaks: int, **kw) -> list:
    return [float(s) for s in emergent_peaks(traj, n_peaks, **kw)[0]]

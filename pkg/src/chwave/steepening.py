"""Inflection-point tracking, Riccati (coth) envelopes and blow-up detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NoInflection, PreconditionFailed, TrackingLost
from .grid import Field, derivative_hat, padded_product


@dataclass(frozen=True)
class SlopeRecord:
    t: float
    nu: float
    s: float
    u_at_nu: float
    kconv_at_nu: float
    envelope: float = float("nan")


def _fd_second_derivative(v, dx):
    return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / dx**2


def _candidates(u: Field):
    """All negative-slope sign changes of u_xx: (left node, position, slope)."""
    grid = u.grid
    v = u.values
    # second differences stay clean at peakon cusps, where spectral u_xx rings
    uxx = _fd_second_derivative(v, grid.dx)
    ux = np.fft.irfft(derivative_hat(grid, u.spectral), grid.n)
    a, b = uxx, np.roll(uxx, -1)
    change = ((a < 0) & (b >= 0)) | ((a > 0) & (b <= 0))
    idx = np.nonzero(change)[0]
    frac = a[idx] / (a[idx] - b[idx])
    pos = (grid.x[idx] + frac * grid.dx) % grid.length
    slope = ux[idx] + frac * (np.roll(ux, -1)[idx] - ux[idx])
    keep = slope < 0
    return idx[keep], pos[keep], slope[keep]


def find_inflection(u: Field, hint: Optional[float] = None) -> float:
    """Position of a negative-slope inflection point of ``u``.

    Without a hint: the first one met scanning rightwards (periodically) from
    the global maximum; the two cells next to the maximum are skipped so that a
    cusp is not mistaken for an inflection.  With a hint: the one nearest to it.
    """
    if np.ptp(u.values) == 0.0:
        raise NoInflection("constant field has no inflection point")
    idx, pos, _ = _candidates(u)
    if len(idx) == 0:
        raise NoInflection("no sign change of u_xx with negative slope")
    grid = u.grid
    if hint is not None:
        d = np.abs(grid.periodic_distance(hint, pos))
        return float(pos[np.argmin(d)])
    i_max = int(np.argmax(u.values))
    offset = (idx - i_max) % grid.n
    ok = offset >= 2
    if not np.any(ok):
        raise NoInflection("no inflection point to the right of the maximum")
    return float(pos[ok][np.argmin(offset[ok])])


def _interp_periodic(grid, values, x):
    s = (x % grid.length) / grid.dx
    i = int(np.floor(s))
    f = s - i
    return float((1 - f) * values[i % grid.n] + f * values[(i + 1) % grid.n])


def slope_data(u: Field, nu: float):
    """(s, u, K*(u^2 + u_x^2/2)) at ``nu`` by linear interpolation of spectral fields."""
    grid = u.grid
    uh = u.spectral
    uxh = derivative_hat(grid, uh)
    ux = np.fft.irfft(uxh, grid.n)
    src = padded_product(grid, uh, uh) + 0.5 * padded_product(grid, uxh, uxh)
    kconv = np.fft.irfft(grid.helmholtz_symbol * src, grid.n)
    return (_interp_periodic(grid, ux, nu), _interp_periodic(grid, u.values, nu),
            _interp_periodic(grid, kconv, nu))


# Riccati envelopes -----------------------------------------------------------

def _check_lemma(s0, M):
    if M < 0:
        raise PreconditionFailed("M must be non-negative")
    if not s0 < -np.sqrt(2.0 * M) or s0 >= 0:
        raise PreconditionFailed(f"need s0 < -sqrt(2M) = {-np.sqrt(2 * M):.6g}, got s0 = {s0}")


def breaking_time_bound(s0: float, M: float) -> float:
    """Time by which the slope must become vertical: -2 sigma / sqrt(2M)."""
    _check_lemma(s0, M)
    if M == 0:
        return -2.0 / s0
    r = np.sqrt(2.0 * M)
    sigma = np.arctanh(r / s0)  # arccoth(s0 / r)
    return float(-2.0 * sigma / r)


def coth_envelope(s0: float, M: float, t):
    """Solution of ds/dt = -s^2/2 + M from s0; -inf at and after its blow-up time."""
    _check_lemma(s0, M)
    t = np.asarray(t, dtype=float)
    tb = breaking_time_bound(s0, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        if M == 0:
            val = s0 / (1.0 + 0.5 * s0 * t)
        else:
            r = np.sqrt(2.0 * M)
            val = r / np.tanh(np.arctanh(r / s0) + 0.5 * t * r)
    val = np.where(t >= tb, -np.inf, val)
    return float(val) if val.ndim == 0 else val


# tracking --------------------------------------------------------------------

def track(traj, M: Optional[float] = None) -> list:
    """Follow the negative-slope inflection point through a trajectory.

    The first snapshot uses the right-of-maximum rule, later ones continuity.
    ``M`` defaults to the largest squared sup norm over the stored snapshots.
    The envelope column is NaN when the lemma's hypothesis fails.
    """
    grid = traj.grid
    records = []
    hint = None
    for i, t in enumerate(traj.times):
        u = traj.field_at(i)
        try:
            nu = find_inflection(u, hint)
        except NoInflection:
            break
        if hint is not None and abs(grid.periodic_distance(hint, nu)) > grid.length / 10:
            raise TrackingLost(f"inflection jumped from {hint:.4g} to {nu:.4g} at t={t:.4g}")
        s, u_nu, kc = slope_data(u, nu)
        records.append(SlopeRecord(float(t), nu, s, u_nu, kc))
        hint = nu
    if not records:
        return records
    if M is None:
        M = float(np.max(np.abs(traj.snapshots)) ** 2)
    s0 = records[0].s
    if s0 < -np.sqrt(2 * M):
        env = coth_envelope(s0, M, np.array([r.t for r in records]))
        records = [SlopeRecord(r.t, r.nu, r.s, r.u_at_nu, r.kconv_at_nu, float(e))
                   for r, e in zip(records, env)]
    return records


def detect_blowup(records: Sequence[SlopeRecord], slope_threshold: float) -> Optional[float]:
    """First time the tracked slope reaches ``slope_threshold``, or None."""
    if not records:
        return None
    s0 = records[0].s
    if not slope_threshold < 0 or abs(slope_threshold) < 10 * abs(s0):
        raise PreconditionFailed("threshold must be negative with |threshold| >= 10 |s0|")
    for r in records:
        if r.s <= slope_threshold:
            return r.t
    return None


def refined_breaking_time(run: Callable[[float], Sequence[SlopeRecord]], dt: float,
                          slope_threshold: float):
    """Detect breaking at ``dt`` and ``dt/2``.

    Returns ``(t_dt, t_half, agree)`` where ``agree`` means both runs broke and
    the two times differ by at most ``2 dt``.
    """
    t1 = detect_blowup(run(dt), slope_threshold)
    t2 = detect_blowup(run(dt / 2), slope_threshold)
    agree = t1 is not None and t2 is not None and abs(t1 - t2) <= 2 * dt
    return t1, t2, agree


def write_slope_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nu", "s", "u_at_nu", "kconv_at_nu", "envelope"])
        for r in records:
            w.writerow([format(float(v), ".17g")
                        for v in (r.t, r.nu, r.s, r.u_at_nu, r.kconv_at_nu, r.envelope)])

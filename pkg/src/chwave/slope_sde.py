"""Reduced stochastic dynamics of the slope at the inflection point.

Two path models are provided:

* ``"comparison"``: the lower comparison SDE (Stratonovich, Heun)
      ds = -(s^2/2 - |xi|^2 s/2 + M) dt + |xi| s o dW
* ``"ito"``: the Ito slope equation (Euler-Maruyama) with the PDE coupling
  frozen at given values of u(nu) and K*(u^2 + u_x^2/2)(nu)
      ds = -(s^2/2 - u^2) dt - kconv dt - |xi| s dW + |xi|^2 s/2 dt
  By default the coupling is the worst case u^2 = M, kconv = 0, which makes
  the path an upper envelope of the true slope.

A path is *broken* when it reaches the blow-up threshold (or overflows) before T.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from . import rng as _rng
from .errors import ConfigError, PreconditionFailed
from .sde import heun_step

MODES = ("comparison", "ito")


@dataclass(frozen=True)
class SlopeSDEParams:
    s0: float
    M: float
    xi_norm: float
    eps: float = 0.1
    dt: float = 1e-3
    T: float = 1.0
    threshold: float = -1e3

    def __post_init__(self):
        problems = []
        if not self.s0 < 0:
            problems.append("s0: must be negative")
        if not self.M >= 0:
            problems.append("M: must be non-negative")
        if not self.xi_norm >= 0:
            problems.append("xi_norm: must be non-negative")
        if not 0 < self.eps < 1 / 3:
            problems.append("eps: must lie in (0, 1/3)")
        if not self.dt > 0:
            problems.append("dt: must be positive")
        if not self.T > 0:
            problems.append("T: must be positive")
        if not self.threshold <= 10 * self.s0:
            problems.append("threshold: must be <= 10 * s0")
        if problems:
            raise ConfigError(problems)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


# single steps ----------------------------------------------------------------

def ito_slope_step(s, u_at_nu, kconv_at_nu, xi_norm, dt, dW):
    """Euler-Maruyama step of the Ito slope equation (constant modes aggregated)."""
    drift = -(0.5 * s * s - u_at_nu * u_at_nu) - kconv_at_nu + 0.5 * s * xi_norm**2
    return s + drift * dt - s * xi_norm * dW


def comparison_drift(s, M, xi_norm):
    return -(0.5 * s * s - 0.5 * xi_norm**2 * s + M)


def comparison_step(s, M, xi_norm, dt, dW):
    """Heun step of the comparison SDE."""
    return heun_step(lambda y: comparison_drift(y, M, xi_norm),
                     lambda y, w: xi_norm * y * w, s, dt, dW)


# closed forms ----------------------------------------------------------------

def _mean_bound_coeffs(params: SlopeSDEParams):
    a = 0.5 * (1.0 - params.eps)
    b = params.M + params.xi_norm**2 / (2.0 * params.eps)
    return a, b


def mean_bound_blowup_time(params: SlopeSDEParams) -> float:
    a, b = _mean_bound_coeffs(params)
    s0 = params.s0
    if b == 0:
        return -1.0 / (a * s0)
    root = np.sqrt(b / a)
    if not s0 < -root:
        raise PreconditionFailed(f"need s0 < -sqrt(b/a) = {-root:.6g}")
    return float(-np.arctanh(root / s0) / np.sqrt(a * b))


def riccati_mean_bound(params: SlopeSDEParams, t):
    """Upper bound on E[s_t] from ds <= -a s^2 + b with a = (1-eps)/2, b = M + |xi|^2/(2 eps)."""
    a, b = _mean_bound_coeffs(params)
    s0 = params.s0
    tb = mean_bound_blowup_time(params)
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if b == 0:
            val = s0 / (1.0 + a * s0 * t)
        else:
            root = np.sqrt(b / a)
            val = root / np.tanh(np.arctanh(root / s0) + t * np.sqrt(a * b))
    val = np.where(t >= tb, -np.inf, val)
    return float(val) if val.ndim == 0 else val


def bm_drift_max_prob(mu: float, sigma: float, a: float) -> float:
    """P(sup_t sigma B_t + mu t >= a) = exp(-2 |mu| a / sigma^2) for mu < 0."""
    if not mu < 0:
        raise PreconditionFailed("drift mu must be negative")
    if not sigma > 0:
        raise PreconditionFailed("sigma must be positive")
    if not a >= 0:
        raise PreconditionFailed("level a must be non-negative")
    return float(np.exp(-2.0 * abs(mu) * a / sigma**2))


def drifted_bm_max_mc(mu, sigma, a, n_paths, dt, T, seed=0, chunk_size=20000):
    """Monte Carlo estimate of P(max_{[0,T]} X >= a), X = sigma B + mu t.

    Within each step the maximum of the Brownian bridge between the sampled
    endpoints is drawn exactly, so the estimate carries no time-discretization
    bias; only the truncation at ``T`` remains.  Returns ``(p_hat, std_err)``.
    """
    n_steps = int(round(T / dt))
    hits = 0
    for c, start in enumerate(range(0, n_paths, chunk_size)):
        m = min(chunk_size, n_paths - start)
        gen = _rng.path_generator(seed, c)
        x = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        sd = sigma * np.sqrt(dt)
        for _ in range(n_steps):
            k = int(alive.sum())
            if k == 0:
                break
            x0 = x[alive]
            x1 = x0 + mu * dt + sd * gen.standard_normal(k)
            u = 1.0 - gen.random(k)
            peak = 0.5 * (x0 + x1 + np.sqrt((x1 - x0) ** 2 - 2.0 * sd**2 * np.log(u)))
            hit = peak >= a
            x[alive] = x1
            idx = np.nonzero(alive)[0]
            alive[idx[hit]] = False
        hits += m - int(alive.sum())
    p = hits / n_paths
    return p, float(np.sqrt(p * (1 - p) / n_paths))


# path simulation -------------------------------------------------------------

@dataclass
class SlopePath:
    times: np.ndarray
    s: np.ndarray
    broken: bool
    t_break: Optional[float]


def _path_increments(params, seed, path_index):
    gen = _rng.path_generator(seed, path_index)
    return gen.standard_normal(params.n_steps) * np.sqrt(params.dt)


def _coupling(params, u_at_nu, kconv_at_nu):
    return (np.sqrt(params.M) if u_at_nu is None else float(u_at_nu)), float(kconv_at_nu)


def _advance(params, mode, s, dW, u_nu, kconv):
    if mode == "comparison":
        return comparison_step(s, params.M, params.xi_norm, params.dt, dW)
    return ito_slope_step(s, u_nu, kconv, params.xi_norm, params.dt, dW)


def comparison_sde_path(params: SlopeSDEParams, seed: int = 0, path_index: int = 0,
                        dW=None, mode: str = "comparison", u_at_nu=None,
                        kconv_at_nu=0.0) -> SlopePath:
    """One path until T, the blow-up threshold, or overflow."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if dW is None:
        dW = _path_increments(params, seed, path_index)
    u_nu, kconv = _coupling(params, u_at_nu, kconv_at_nu)
    s = float(params.s0)
    out = [s]
    broken = False
    t_break = None
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(params.n_steps):
            s = float(_advance(params, mode, s, dW[i], u_nu, kconv))
            if not np.isfinite(s) or s <= params.threshold:
                broken, t_break = True, (i + 1) * params.dt
                out.append(params.threshold if not np.isfinite(s) else s)
                break
            out.append(s)
    times = np.arange(len(out)) * params.dt
    return SlopePath(times, np.array(out), broken, t_break)


def _run_chunk(params, mode, seed, path_indices, u_nu, kconv, out_steps):
    """Vectorized paths; broken paths are frozen at the threshold."""
    dW = np.stack([_path_increments(params, seed, j) for j in path_indices])
    m = len(path_indices)
    s = np.full(m, float(params.s0))
    t_break = np.full(m, np.nan)
    alive = np.ones(m, dtype=bool)
    series = np.empty((len(out_steps), m))
    out_pos = {step: k for k, step in enumerate(out_steps)}
    if 0 in out_pos:
        series[out_pos[0]] = s
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(params.n_steps):
            idx = np.nonzero(alive)[0]
            if len(idx):
                new = _advance(params, mode, s[idx], dW[idx, i], u_nu, kconv)
                hit = ~np.isfinite(new) | (new <= params.threshold)
                new[hit] = params.threshold
                s[idx] = new
                t_break[idx[hit]] = (i + 1) * params.dt
                alive[idx[hit]] = False
            k = out_pos.get(i + 1)
            if k is not None:
                series[k] = s
            elif not len(idx) and i + 1 > out_steps[-1]:
                break
    return t_break, s, series


@dataclass
class EnsembleSummary:
    n_paths: int
    n_broken: int
    p_hat: float
    ci_low: float
    ci_high: float
    master_seed: int
    mode: str
    params: dict
    path_index: np.ndarray
    broken: np.ndarray
    t_break: np.ndarray
    final_s: np.ndarray
    times: np.ndarray
    mean_s: np.ndarray
    se_s: np.ndarray
    coupling: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n_paths": self.n_paths, "n_broken": self.n_broken, "p_hat": self.p_hat,
            "wilson95": [self.ci_low, self.ci_high], "master_seed": self.master_seed,
            "mode": self.mode, "params": self.params, "coupling": self.coupling,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_paths_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_index", "seed", "broken", "t_break", "final_s"])
            for j, b, tb, fs in zip(self.path_index, self.broken, self.t_break, self.final_s):
                w.writerow([int(j), self.master_seed, int(b),
                            "" if np.isnan(tb) else format(float(tb), ".17g"),
                            format(float(fs), ".17g")])

    def write_mean_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mean_s", "se_s"])
            for row in zip(self.times, self.mean_s, self.se_s):
                w.writerow([format(float(v), ".17g") for v in row])


def wilson_interval(k: int, n: int, confidence: float = 0.95):
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def mc_breaking_probability(params: SlopeSDEParams, n_paths: int, master_seed: int,
                            mode: str = "comparison", u_at_nu=None, kconv_at_nu=0.0,
                            n_output: int = 200, chunk_size: int = 1024,
                            workers: int = 1) -> EnsembleSummary:
    """Fraction of paths reaching the blow-up threshold before T.

    Path ``j`` always uses stream (master_seed, j), so the result does not
    depend on ``chunk_size`` or ``workers``.  In the mean series broken paths
    are held at the threshold, an upper estimate of their true value.
    """
    if n_paths < 100:
        raise PreconditionFailed("n_paths must be at least 100")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    u_nu, kconv = _coupling(params, u_at_nu, kconv_at_nu)
    out_steps = np.unique(np.linspace(0, params.n_steps, n_output + 1).round().astype(int))
    chunks = [list(range(a, min(a + chunk_size, n_paths))) for a in range(0, n_paths, chunk_size)]
    args = [(params, mode, master_seed, c, u_nu, kconv, out_steps) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, *zip(*args)))
    else:
        results = [_run_chunk(*a) for a in args]
    t_break = np.concatenate([r[0] for r in results])
    final_s = np.concatenate([r[1] for r in results])
    series = np.concatenate([r[2] for r in results], axis=1)
    broken = ~np.isnan(t_break)
    k = int(broken.sum())
    lo, hi = wilson_interval(k, n_paths)
    mean = series.mean(axis=1)
    se = series.std(axis=1, ddof=1) / np.sqrt(n_paths)
    return EnsembleSummary(
        n_paths=n_paths, n_broken=k, p_hat=k / n_paths, ci_low=lo, ci_high=hi,
        master_seed=master_seed, mode=mode, params=asdict(params),
        path_index=np.arange(n_paths), broken=broken, t_break=t_break, final_s=final_s,
        times=out_steps * params.dt, mean_s=mean, se_s=se,
        coupling={"u_at_nu": u_nu, "kconv_at_nu": kconv} if mode == "ito" else {},
    )

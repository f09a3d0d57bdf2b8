"""Experiment runners that turn an ``ExperimentConfig`` into a run directory.

Each run directory holds ``manifest.json``, ``schema.json`` and CSV files.  The
manifest echoes the full configuration and carries a content hash over the
configuration, seed and every data file (wall time excluded), so identical
inputs give identical hashes.  A manifest is written even when a run fails.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import isospectral, pde, peakons, slope_sde, steepening
from .config import ExperimentConfig
from .errors import PeaksNotSeparated, PreconditionFailed, TrackingLost
from .grid import write_csv

OUTPUT_ROOT_ENV = "CHWAVE_OUTPUT_ROOT"
MANIFEST_VERSION = 1

SCHEMAS = {
    "diagnostics.csv": ["t", "h", "norm12", "momentum", "supu", "supux", "broken"],
    "slope.csv": ["t", "nu", "s", "u_at_nu", "kconv_at_nu", "envelope"],
    "peaks.csv": ["t", "n_peaks"],
    "u_final.csv": ["x", "value"],
    "paths.csv": ["path_index", "seed", "broken", "t_stop", "norm12_drift"],
    "peakons.csv": ["t", "q1..qM", "p1..pM", "H"],
    "mc_paths.csv": ["path_index", "seed", "broken", "t_break", "final_s"],
    "mc_mean.csv": ["t", "mean_s", "se_s"],
    "mc_bound.csv": ["t", "riccati_mean_bound"],
    "drift.csv": ["t", "drift"],
    "speeds.csv": ["rank", "eigenvalue", "speed", "height", "rel_diff"],
    "eigenvalues.csv": ["rank", "eigenvalue"],
}
PLOT_NOTE = "plot_*.csv files are two-column (x, y) series named in their header"


def _versions():
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"chwave": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _fmt(v):
    return format(float(v), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _plot(out: Path, name, xlabel, ylabel, x, y):
    _write_rows(out / f"plot_{name}.csv", [xlabel, ylabel], zip(x, y))


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def default_output_dir(verb: str, cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    key = hashlib.sha256(json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest()[:12]
    return root / f"{verb}-{key}-seed{cfg.seed}"


class _Run:
    """Owns the output directory and always leaves a manifest behind."""

    def __init__(self, verb, cfg: ExperimentConfig, out):
        self.verb = verb
        self.cfg = cfg
        self.out = Path(out) if out is not None else default_output_dir(verb, cfg)
        self.notes = []
        self.results = {}

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "ok" if exc is None else "failed"
        if exc is not None:
            self.notes.append("".join(traceback.format_exception_only(exc_type, exc)).strip())
        self._write_schema()
        files = {p.name: _sha(p) for p in sorted(self.out.iterdir())
                 if p.is_file() and p.name != "manifest.json"}
        for sub in sorted(p for p in self.out.iterdir() if p.is_dir()):
            for f in sorted(sub.iterdir()):
                files[f"{sub.name}/{f.name}"] = _sha(f)
        body = {"manifest_version": MANIFEST_VERSION, "command": self.verb,
                "config": self.cfg.raw, "seed": self.cfg.seed, "status": status,
                "results": self.results, "notes": self.notes, "files": files}
        digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        manifest = dict(body, content_hash=digest, versions=_versions(),
                        wall_time_s=time.perf_counter() - self.t0)
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return False

    def _write_schema(self):
        present = {p.name for p in self.out.iterdir()}
        schema = {name: cols for name, cols in SCHEMAS.items() if name in present}
        schema["_notes"] = [PLOT_NOTE, "doubles are printed with 17 significant digits",
                            "per-path files under paths/ reuse the top-level schemas"]
        (self.out / "schema.json").write_text(json.dumps(schema, indent=2, sort_keys=True))


# shared pieces ---------------------------------------------------------------

def _sim_config(cfg: ExperimentConfig, noise=None) -> pde.SimulationConfig:
    t = cfg.section("time")
    return pde.SimulationConfig(
        u0=cfg.initial_field(), dt=t["dt"], T=t["T"], output_stride=t["output_stride"],
        noise=noise if noise is not None else pde.NoiseBasis(),
        blowup_threshold=cfg.section("tracking")["blowup_threshold"],
        substeps=cfg.section("noise")["substeps"])


def _write_trajectory(out: Path, traj, run: _Run, prefix=""):
    pde.write_diagnostics_csv(traj, out / f"{prefix}diagnostics.csv")
    d = traj.diagnostics
    if not prefix:
        _plot(out, "h", "t", "h", d["t"], d["h"])
        _plot(out, "supux", "t", "supux", d["t"], d["supux"])
    try:
        records = steepening.track(traj)
    except (TrackingLost, PreconditionFailed) as exc:
        run.notes.append(f"{prefix}slope tracking stopped: {exc}")
        records = []
    steepening.write_slope_csv(records, out / f"{prefix}slope.csv")
    return records


def _peak_counts(cfg, traj):
    prom = cfg.section("spectrum")["rel_prominence"]
    return np.array([isospectral.count_peaks(traj.field_at(i), prom)
                     for i in range(len(traj.times))])


# runners ----------------------------------------------------------------------

def run_ch(cfg: ExperimentConfig, out=None) -> Path:
    """Deterministic PDE run with diagnostics, slope track and peak counts."""
    with _Run("simulate-ch", cfg, out) as run:
        traj = pde.simulate(_sim_config(cfg), seed=cfg.seed)
        records = _write_trajectory(run.out, traj, run)
        counts = _peak_counts(cfg, traj)
        _write_rows(run.out / "peaks.csv", SCHEMAS["peaks.csv"], zip(traj.times, counts))
        _plot(run.out, "peaks", "t", "n_peaks", traj.times, counts)
        write_csv(traj.final, run.out / "u_final.csv")
        h = traj.diagnostics["h"]
        limit = float(-cfg.section("tracking")["slope_threshold"])
        run.results = {
            "broken": traj.broken, "t_stop": traj.t_stop,
            "h_relative_drift": float(np.max(np.abs(h / h[0] - 1.0))),
            "final_peak_count": int(counts[-1]),
            "slope_threshold_time": next((r.t for r in records if r.s <= -limit), None),
        }
        n_peaks = int(counts[-1])
        if n_peaks:
            try:
                speeds, heights = isospectral.emergent_peaks(
                    traj, n_peaks, rel_prominence=cfg.section("spectrum")["rel_prominence"])
            except (PeaksNotSeparated, ValueError) as exc:
                run.notes.append(f"emergent peaks unavailable: {exc}")
            else:
                run.results["peak_speeds"] = [float(v) for v in speeds]
                run.results["peak_heights"] = [float(v) for v in heights]
    return run.out


def _sch_path(cfg_raw, base_dir, seed, j):
    cfg = ExperimentConfig.from_dict(cfg_raw, base_dir)
    return j, pde.simulate(_sim_config(cfg, cfg.noise_basis()), seed=seed, path_index=j)


def run_sch(cfg: ExperimentConfig, out=None) -> Path:
    """Stochastic ensemble: one directory entry per path plus a merged summary."""
    with _Run("simulate-sch", cfg, out) as run:
        n_paths = cfg.section("mc")["n_paths"]
        workers = cfg.section("mc")["workers"]
        paths_dir = run.out / "paths"
        paths_dir.mkdir(exist_ok=True)
        args = [(cfg.raw, cfg.base_dir, cfg.seed, j) for j in range(n_paths)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_sch_path, *zip(*args)))
        else:
            results = [_sch_path(*a) for a in args]
        rows = []
        for j, traj in sorted(results, key=lambda r: r[0]):
            _write_trajectory(paths_dir, traj, run, prefix=f"path_{j:05d}_")
            n12 = traj.diagnostics["norm12"]
            rows.append((j, cfg.seed, int(traj.broken), traj.t_stop,
                         float(np.max(np.abs(n12 / n12[0] - 1.0)))))
        _write_rows(run.out / "paths.csv", SCHEMAS["paths.csv"], rows)
        _plot(run.out, "norm12_drift", "path_index", "norm12_drift",
              [r[0] for r in rows], [r[4] for r in rows])
        run.results = {"n_paths": n_paths, "n_broken": int(sum(r[2] for r in rows)),
                       "max_norm12_drift": max(r[4] for r in rows)}
    return run.out


def run_peakons(cfg: ExperimentConfig, out=None) -> Path:
    """Peakon ODE run, or one SDE path per ``mc.n_paths`` when noise is active."""
    with _Run("peakons", cfg, out) as run:
        q, p = cfg.peakon_list()
        t = cfg.section("time")
        noise = cfg.noise_basis()
        state = peakons.PeakonState(q, p)
        n_paths = 1 if noise.is_trivial else cfg.section("mc")["n_paths"]
        drift = []
        for j in range(n_paths):
            traj = peakons.simulate_peakons(state, t["dt"], t["T"], noise, seed=cfg.seed,
                                            path_index=j, output_stride=t["output_stride"])
            name = "peakons.csv" if n_paths == 1 else f"peakons_path_{j:05d}.csv"
            if n_paths > 1:
                (run.out / "paths").mkdir(exist_ok=True)
                name = f"paths/{name}"
            peakons.write_peakon_csv(traj, run.out / name)
            drift.append(float(np.max(np.abs(traj.hamiltonian / traj.hamiltonian[0] - 1.0))))
            if j == 0:
                _plot(run.out, "H", "t", "H", traj.times, traj.hamiltonian)
        run.results = {"n_paths": n_paths, "max_hamiltonian_drift": max(drift)}
    return run.out


def _xi_norm(cfg):
    mc = cfg.section("mc")
    if mc["xi_norm"] is not None:
        return float(mc["xi_norm"])
    noise = cfg.noise_basis()
    return 0.0 if noise.is_trivial else noise.xi_norm


def run_slope_mc(cfg: ExperimentConfig, out=None) -> Path:
    """Monte Carlo breaking probability of the reduced slope dynamics."""
    with _Run("slope-mc", cfg, out) as run:
        mc, t = cfg.section("mc"), cfg.section("time")
        params = slope_sde.SlopeSDEParams(mc["s0"], mc["M"], _xi_norm(cfg), mc["eps"],
                                          t["dt"], t["T"], mc["threshold"])
        summary = slope_sde.mc_breaking_probability(params, mc["n_paths"], cfg.seed,
                                                    mode=mc["mode"], workers=mc["workers"])
        summary.write_paths_csv(run.out / "mc_paths.csv")
        summary.write_mean_csv(run.out / "mc_mean.csv")
        _plot(run.out, "mean_s", "t", "mean_s", summary.times, summary.mean_s)
        try:
            bound = slope_sde.riccati_mean_bound(params, summary.times)
            _write_rows(run.out / "mc_bound.csv", SCHEMAS["mc_bound.csv"],
                        zip(summary.times, bound))
        except PreconditionFailed as exc:
            run.notes.append(f"mean bound not applicable: {exc}")
        run.results = summary.to_dict()
    return run.out


def run_spectrum(cfg: ExperimentConfig, out=None) -> Path:
    """Spectrum of the initial momentum, its drift along the CH flow, and peak speeds."""
    with _Run("spectrum", cfg, out) as run:
        sp = cfg.section("spectrum")
        u0 = cfg.initial_field()
        res = isospectral.ch_spectrum(isospectral.momentum_of(u0), sp["k_max"])
        res.to_json(run.out / "spectrum.json")
        _write_rows(run.out / "eigenvalues.csv", SCHEMAS["eigenvalues.csv"],
                    enumerate(res.eigenvalues, 1))
        traj = pde.simulate(_sim_config(cfg), seed=cfg.seed)
        drift = isospectral.isospectral_drift(traj, sp["k_max"])
        _write_rows(run.out / "drift.csv", SCHEMAS["drift.csv"], zip(traj.times, drift))
        _plot(run.out, "drift", "t", "drift", traj.times, drift)
        run.results = {"eigenvalues": [float(v) for v in res.eigenvalues],
                       "indefinite": res.indefinite, "max_drift": float(drift.max())}
        try:
            speeds, heights = isospectral.emergent_peaks(traj, sp["n_peaks"],
                                                         rel_prominence=sp["rel_prominence"])
        except (PeaksNotSeparated, ValueError) as exc:
            run.notes.append(f"emergent speeds unavailable: {exc}")
        else:
            lam = res.eigenvalues[: len(speeds)]
            rows = [(i + 1, l, s, h, abs(s / l - 1.0))
                    for i, (l, s, h) in enumerate(zip(lam, speeds, heights))]
            _write_rows(run.out / "speeds.csv", SCHEMAS["speeds.csv"], rows)
            run.results["speeds"] = [float(s) for s in speeds]
    return run.out


RUNNERS = {
    "simulate-ch": run_ch,
    "simulate-sch": run_sch,
    "peakons": run_peakons,
    "slope-mc": run_slope_mc,
    "spectrum": run_spectrum,
}

"""JSON experiment configuration.

Every section is optional; missing keys take the defaults below.  Validation
collects every problem before raising a single ``ConfigError``.

    domain             L = 40.0, n = 1024
    time               dt = 1e-3, T = 1.0, output_stride = 100
    initial_condition  type = "gaussian" with amplitude = 1.0, width = 1.0,
                       center = L/2; or "peakons" with peakons = [{p, q}, ...];
                       or "antisymmetric" with amplitude, width, center = L/2;
                       or "file" with path (two-column x,value CSV)
    noise              enabled = true, substeps = 1, modes = [] where a mode is
                       {type: "constant", c} | {type: "exponential", C, A, B}
                       | {type: "file", path}
    tracking           blowup_threshold = 1000.0, slope_threshold = -50.0
    mc                 n_paths = 100, eps = 0.1, s0 = -5.0, M = 1.0,
                       xi_norm = None (taken from constant noise modes),
                       mode = "comparison", threshold = -1000.0, workers = 1
    spectrum           k_max = 3, n_peaks = 2, rel_prominence = 0.03
    seed               0
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import Field, Grid, read_csv
from .noise import Constant, Exponential, NoiseBasis, Sampled

DEFAULTS = {
    "domain": {"L": 40.0, "n": 1024},
    "time": {"dt": 1e-3, "T": 1.0, "output_stride": 100},
    "initial_condition": {"type": "gaussian", "amplitude": 1.0, "width": 1.0, "center": None},
    "noise": {"enabled": True, "substeps": 1, "modes": []},
    "tracking": {"blowup_threshold": 1e3, "slope_threshold": -50.0},
    "mc": {"n_paths": 100, "eps": 0.1, "s0": -5.0, "M": 1.0, "xi_norm": None,
           "mode": "comparison", "threshold": -1e3, "workers": 1},
    "spectrum": {"k_max": 3, "n_peaks": 2, "rel_prominence": 0.03},
    "seed": 0,
}

IC_KEYS = {
    "gaussian": {"type", "amplitude", "width", "center"},
    "antisymmetric": {"type", "amplitude", "width", "center"},
    "peakons": {"type", "peakons"},
    "file": {"type", "path"},
}


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(out.get(key), dict) and isinstance(val, dict) and key != "initial_condition":
            out[key].update(val)
        else:
            out[key] = val
    return out


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        cfg = cls(_merge(DEFAULTS, data), Path(base_dir))
        problems = [f"{k}: unknown section" for k in unknown] + cfg._problems()
        if problems:
            raise ConfigError(problems)
        cfg._absolutize_paths()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        if isinstance(data, dict) and "manifest_version" in data:
            # a run manifest carries the full configuration it was produced from
            data = data["config"]
        return cls.from_dict(data, path.parent)

    def with_overrides(self, seed=None, n_paths=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if n_paths is not None:
            raw["mc"]["n_paths"] = n_paths
        return ExperimentConfig.from_dict(raw, self.base_dir)

    # validation ------------------------------------------------------------

    def _problems(self):
        r = self.raw
        p = []
        for sec in DEFAULTS:
            if sec != "seed" and not isinstance(r[sec], dict):
                p.append(f"{sec}: must be an object")
        if p:
            return p
        for sec, keys in DEFAULTS.items():
            if isinstance(keys, dict) and sec != "initial_condition":
                p += [f"{sec}.{k}: unknown key" for k in sorted(set(r[sec]) - set(keys))]

        d = r["domain"]
        if not _is_int(d["n"]) or d["n"] < 16 or d["n"] & (d["n"] - 1):
            p.append("domain.n: must be a power of two >= 16")
        if not _is_num(d["L"]) or d["L"] <= 0:
            p.append("domain.L: must be a positive number")

        t = r["time"]
        for k in ("dt", "T"):
            if not _is_num(t[k]) or t[k] <= 0:
                p.append(f"time.{k}: must be a positive number")
        if not _is_int(t["output_stride"]) or t["output_stride"] < 1:
            p.append("time.output_stride: must be a positive integer")

        p += self._ic_problems(r["initial_condition"])

        nz = r["noise"]
        if not isinstance(nz["enabled"], bool):
            p.append("noise.enabled: must be true or false")
        if not _is_int(nz["substeps"]) or nz["substeps"] < 1:
            p.append("noise.substeps: must be a positive integer")
        if not isinstance(nz["modes"], list):
            p.append("noise.modes: must be a list")
        else:
            for i, m in enumerate(nz["modes"]):
                p += self._mode_problems(i, m)

        tr = r["tracking"]
        if not _is_num(tr["blowup_threshold"]) or tr["blowup_threshold"] <= 0:
            p.append("tracking.blowup_threshold: must be a positive number")
        if not _is_num(tr["slope_threshold"]) or tr["slope_threshold"] >= 0:
            p.append("tracking.slope_threshold: must be a negative number")

        mc = r["mc"]
        if not _is_int(mc["n_paths"]) or mc["n_paths"] < 1:
            p.append("mc.n_paths: must be a positive integer")
        if not _is_num(mc["eps"]) or not 0 < mc["eps"] < 1 / 3:
            p.append("mc.eps: must lie in (0, 1/3)")
        if not _is_num(mc["s0"]) or mc["s0"] >= 0:
            p.append("mc.s0: must be negative")
        if not _is_num(mc["M"]) or mc["M"] < 0:
            p.append("mc.M: must be non-negative")
        if mc["xi_norm"] is not None and (not _is_num(mc["xi_norm"]) or mc["xi_norm"] < 0):
            p.append("mc.xi_norm: must be null or non-negative")
        if mc["mode"] not in ("comparison", "ito"):
            p.append("mc.mode: must be 'comparison' or 'ito'")
        if not _is_num(mc["threshold"]) or mc["threshold"] >= 0:
            p.append("mc.threshold: must be negative")
        if not _is_int(mc["workers"]) or mc["workers"] < 1:
            p.append("mc.workers: must be a positive integer")

        sp = r["spectrum"]
        for k in ("k_max", "n_peaks"):
            if not _is_int(sp[k]) or sp[k] < 1:
                p.append(f"spectrum.{k}: must be a positive integer")
        if not _is_num(sp["rel_prominence"]) or not 0 < sp["rel_prominence"] < 1:
            p.append("spectrum.rel_prominence: must lie in (0, 1)")

        if not _is_int(r["seed"]) or r["seed"] < 0:
            p.append("seed: must be a non-negative integer")
        return p

    def _ic_problems(self, ic):
        if not isinstance(ic, dict) or ic.get("type") not in IC_KEYS:
            return [f"initial_condition.type: must be one of {sorted(IC_KEYS)}"]
        kind = ic["type"]
        p = [f"initial_condition.{k}: unknown key for type {kind!r}"
             for k in sorted(set(ic) - IC_KEYS[kind])]
        if kind in ("gaussian", "antisymmetric"):
            for k in ("amplitude", "width"):
                v = ic.get(k, DEFAULTS["initial_condition"].get(k))
                if not _is_num(v):
                    p.append(f"initial_condition.{k}: must be a number")
            w = ic.get("width", 1.0)
            if _is_num(w) and w <= 0:
                p.append("initial_condition.width: must be positive")
            c = ic.get("center")
            if c is not None and not _is_num(c):
                p.append("initial_condition.center: must be a number or null")
        elif kind == "peakons":
            pk = ic.get("peakons")
            if not isinstance(pk, list) or not pk:
                p.append("initial_condition.peakons: must be a non-empty list of {p, q}")
            else:
                for i, e in enumerate(pk):
                    if not (isinstance(e, dict) and set(e) == {"p", "q"}
                            and _is_num(e["p"]) and _is_num(e["q"])):
                        p.append(f"initial_condition.peakons[{i}]: must be {{p: number, q: number}}")
        else:
            p += self._file_problem("initial_condition.path", ic.get("path"))
        return p

    def _mode_problems(self, i, m):
        where = f"noise.modes[{i}]"
        if not isinstance(m, dict) or m.get("type") not in ("constant", "exponential", "file"):
            return [f"{where}.type: must be 'constant', 'exponential' or 'file'"]
        need = {"constant": {"c"}, "exponential": {"C", "A", "B"}, "file": {"path"}}[m["type"]]
        p = [f"{where}.{k}: unknown key" for k in sorted(set(m) - need - {"type"})]
        p += [f"{where}.{k}: missing" for k in sorted(need - set(m))]
        if m["type"] == "file":
            p += self._file_problem(f"{where}.path", m.get("path"))
        else:
            p += [f"{where}.{k}: must be a number" for k in sorted(need & set(m)) if not _is_num(m[k])]
        return p

    def _file_problem(self, where, path):
        if not isinstance(path, str):
            return [f"{where}: must be a string"]
        if not self._resolve(path).is_file():
            return [f"{where}: file not found: {path}"]
        return []

    def _absolutize_paths(self):
        ic = self.raw["initial_condition"]
        if ic["type"] == "file":
            ic["path"] = str(self._resolve(ic["path"]).resolve())
        for m in self.raw["noise"]["modes"]:
            if m["type"] == "file":
                m["path"] = str(self._resolve(m["path"]).resolve())

    def _resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    # builders -------------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def grid(self) -> Grid:
        d = self.raw["domain"]
        return Grid(d["n"], d["L"])

    def section(self, name) -> dict:
        return self.raw[name]

    def peakon_list(self):
        ic = self.raw["initial_condition"]
        if ic["type"] != "peakons":
            raise ConfigError("initial_condition.type: must be 'peakons' for a peakon run")
        return (np.array([e["q"] for e in ic["peakons"]], dtype=float),
                np.array([e["p"] for e in ic["peakons"]], dtype=float))

    def initial_field(self) -> Field:
        grid = self.grid
        ic = self.raw["initial_condition"]
        kind = ic["type"]
        L = grid.length
        if kind == "file":
            return read_csv(self._resolve(ic["path"]), L)
        if kind == "peakons":
            q, p = self.peakon_list()
            d = (grid.x[:, None] - q[None, :]) % L
            # periodic Green's function of 1 - d^2/dx^2
            return Field(grid, np.cosh(d - 0.5 * L) @ p / (2.0 * np.sinh(0.5 * L)))
        a = ic.get("amplitude", 1.0)
        w = ic.get("width", 1.0)
        c = ic.get("center")
        c = 0.5 * L if c is None else c
        y = grid.periodic_distance(c, grid.x)
        if kind == "gaussian":
            return Field(grid, a * np.exp(-0.5 * (y / w) ** 2))
        return Field(grid, -a * y * np.exp(-0.5 * (y / w) ** 2))

    def noise_basis(self) -> NoiseBasis:
        nz = self.raw["noise"]
        modes = []
        for m in nz["modes"]:
            if m["type"] == "constant":
                modes.append(Constant(float(m["c"])))
            elif m["type"] == "exponential":
                modes.append(Exponential(float(m["C"]), float(m["A"]), float(m["B"])))
            else:
                modes.append(Sampled(read_csv(self._resolve(m["path"]), self.grid.length)))
        return NoiseBasis(tuple(modes), nz["enabled"])

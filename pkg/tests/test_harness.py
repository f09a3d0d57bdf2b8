import json

import numpy as np
import pytest

from chwave import cli
from chwave.config import DEFAULTS, ExperimentConfig
from chwave.errors import ConfigError
from chwave.harness import (OUTPUT_ROOT_ENV, default_output_dir, run_ch, run_peakons, run_sch,
                            run_slope_mc, run_spectrum)

SMALL = {"domain": {"L": 20.0, "n": 64}, "time": {"dt": 1e-2, "T": 0.2, "output_stride": 5}}


def small(**sections):
    raw = json.loads(json.dumps(SMALL))
    for k, v in sections.items():
        if isinstance(v, dict) and k in raw:
            raw[k].update(v)
        else:
            raw[k] = v
    return raw


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


# configuration ----------------------------------------------------------------

def test_defaults_fill_every_section():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.raw["domain"] == DEFAULTS["domain"] and cfg.seed == 0
    assert cfg.grid.n == 1024 and cfg.grid.length == 40.0
    u = cfg.initial_field()
    assert u.values.max() == pytest.approx(1.0) and cfg.grid.x[np.argmax(u.values)] == 20.0
    assert cfg.noise_basis().is_trivial


def test_validation_lists_every_problem():
    bad = {"domain": {"L": -1, "n": 100}, "time": {"dt": 0, "output_stride": 0},
           "noise": {"modes": [{"type": "constant"}, {"type": "wave"}], "enabled": "yes"},
           "mc": {"eps": 0.5, "mode": "x"}, "spectrum": {"k_max": 0},
           "seed": -3, "extra": {}}
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict(bad)
    msg = str(err.value)
    for key in ("domain.L", "domain.n", "time.dt", "time.output_stride", "noise.modes[0].c",
                "noise.modes[1].type", "noise.enabled", "mc.eps", "mc.mode",
                "spectrum.k_max", "seed", "extra: unknown section"):
        assert key in msg, key
    assert len(err.value.problems) == 12


def test_initial_condition_validation(tmp_path):
    for ic, key in [({"type": "gaussian", "width": -1}, "width"),
                    ({"type": "peakons", "peakons": []}, "peakons"),
                    ({"type": "peakons", "peakons": [{"p": 1}]}, "peakons[0]"),
                    ({"type": "file", "path": "missing.csv"}, "file not found"),
                    ({"type": "gaussian", "bogus": 1}, "bogus"),
                    ({"type": "triangle"}, "type")]:
        with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
            ExperimentConfig.from_dict({"initial_condition": ic}, tmp_path)


def test_file_inputs_resolve_relative_to_config(tmp_path):
    g = ExperimentConfig.from_dict(SMALL).grid
    np.savetxt(tmp_path / "u.csv", np.c_[g.x, np.sin(2 * np.pi * g.x / 20)], delimiter=",",
               header="x,value", comments="")
    (tmp_path / "c.json").write_text(json.dumps(small(initial_condition={"type": "file",
                                                                         "path": "u.csv"})))
    cfg = ExperimentConfig.from_json(tmp_path / "c.json")
    assert np.allclose(cfg.initial_field().values, np.sin(2 * np.pi * g.x / 20))
    assert cfg.raw["initial_condition"]["path"] == str((tmp_path / "u.csv").resolve())


def test_peakon_seeding_uses_periodic_green_function():
    cfg = ExperimentConfig.from_dict(small(domain={"n": 1024}, initial_condition={
        "type": "peakons", "peakons": [{"p": 2.0, "q": 10.0}]}))
    u = cfg.initial_field()
    L = 20.0
    assert u.values.max() == pytest.approx(np.cosh(L / 2) / np.sinh(L / 2))
    # trapezoid sum of a cusp: second order in dx
    assert u.values.sum() * u.grid.dx == pytest.approx(2.0, rel=1e-4)


def test_antisymmetric_profile():
    cfg = ExperimentConfig.from_dict(small(initial_condition={"type": "antisymmetric",
                                                              "amplitude": 2.0}))
    v = cfg.initial_field().values
    assert v[32] == 0.0 and np.allclose(v[32 + 1:32 + 20], -v[32 - 1:32 - 20:-1])
    assert v[33] < 0


def test_overrides_revalidate():
    cfg = ExperimentConfig.from_dict(SMALL).with_overrides(seed=7, n_paths=3)
    assert cfg.seed == 7 and cfg.section("mc")["n_paths"] == 3
    with pytest.raises(ConfigError):
        cfg.with_overrides(n_paths=0)


# runners ----------------------------------------------------------------------

def test_run_ch_bundle(tmp_path):
    out = run_ch(ExperimentConfig.from_dict(SMALL), tmp_path / "ch")
    m = manifest(out)
    assert m["status"] == "ok" and m["command"] == "simulate-ch"
    assert m["config"]["domain"] == SMALL["domain"]
    assert set(m["versions"]) >= {"numpy", "scipy", "python"} and m["wall_time_s"] >= 0
    for f in ("diagnostics.csv", "slope.csv", "peaks.csv", "u_final.csv", "schema.json",
              "plot_h.csv", "plot_supux.csv", "plot_peaks.csv"):
        assert f in m["files"] or f == "schema.json"
        assert (out / f).exists()
    schema = json.loads((out / "schema.json").read_text())
    header = (out / "diagnostics.csv").read_text().splitlines()[0].split(",")
    assert header == schema["diagnostics.csv"]
    for name in m["files"]:
        if name.startswith("plot_"):
            assert len((out / name).read_text().splitlines()[1].split(",")) == 2


def test_manifest_hash_is_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict(small(noise={"modes": [{"type": "constant", "c": 0.3}]},
                                           mc={"n_paths": 2}))
    a = manifest(run_sch(cfg, tmp_path / "a"))
    b = manifest(run_sch(cfg, tmp_path / "b"))
    assert a["content_hash"] == b["content_hash"] and a["files"] == b["files"]
    c = manifest(run_sch(cfg.with_overrides(seed=1), tmp_path / "c"))
    assert c["content_hash"] != a["content_hash"]


def test_rerun_from_manifest_alone(tmp_path):
    cfg = ExperimentConfig.from_dict(small(seed=4))
    first = run_ch(cfg, tmp_path / "a")
    again = run_ch(ExperimentConfig.from_json(first / "manifest.json"), tmp_path / "b")
    assert manifest(first)["content_hash"] == manifest(again)["content_hash"]


def test_empty_noise_ensemble_matches_deterministic_run(tmp_path):
    cfg = ExperimentConfig.from_dict(small(mc={"n_paths": 2}))
    ch = run_ch(cfg, tmp_path / "ch")
    sch = run_sch(cfg, tmp_path / "sch")
    for j in range(2):
        for name in ("diagnostics.csv", "slope.csv"):
            assert ((sch / "paths" / f"path_{j:05d}_{name}").read_bytes()
                    == (ch / name).read_bytes())


def test_ensemble_independent_of_workers(tmp_path):
    raw = small(noise={"modes": [{"type": "constant", "c": 0.5}]}, mc={"n_paths": 3})
    one = manifest(run_sch(ExperimentConfig.from_dict(raw), tmp_path / "one"))
    raw["mc"]["workers"] = 2
    two = manifest(run_sch(ExperimentConfig.from_dict(raw), tmp_path / "two"))
    assert one["files"] == two["files"] and one["results"] == two["results"]


def test_failed_run_still_writes_manifest(tmp_path):
    cfg = ExperimentConfig.from_dict(small(time={"dt": 0.2, "T": 0.4}))
    out = tmp_path / "bad"
    with pytest.raises(ConfigError, match="CFL"):
        run_ch(cfg, out)
    m = manifest(out)
    assert m["status"] == "failed" and m["notes"] and "CFL" in m["notes"][-1]
    assert (out / "schema.json").exists()


def test_peakon_runner(tmp_path):
    cfg = ExperimentConfig.from_dict(small(initial_condition={
        "type": "peakons", "peakons": [{"p": 1.0, "q": 5.0}, {"p": 0.5, "q": 12.0}]},
        time={"T": 1.0, "dt": 1e-3, "output_stride": 50}))
    m = manifest(run_peakons(cfg, tmp_path / "pk"))
    assert m["status"] == "ok" and m["results"]["max_hamiltonian_drift"] < 1e-10
    header = (tmp_path / "pk" / "peakons.csv").read_text().splitlines()[0]
    assert header == "t,q1,q2,p1,p2,H"


def test_peakon_runner_rejects_field_initial_condition(tmp_path):
    with pytest.raises(ConfigError):
        run_peakons(ExperimentConfig.from_dict(SMALL), tmp_path / "pk")
    assert manifest(tmp_path / "pk")["status"] == "failed"


def test_slope_mc_runner(tmp_path):
    cfg = ExperimentConfig.from_dict({"time": {"dt": 1e-3, "T": 1.0},
                                      "mc": {"n_paths": 200, "s0": -6.0, "xi_norm": 1.0}})
    out = run_slope_mc(cfg, tmp_path / "mc")
    r = manifest(out)["results"]
    assert r["n_paths"] == 200 and 0 <= r["wilson95"][0] <= r["p_hat"] <= r["wilson95"][1] <= 1
    for f in ("mc_paths.csv", "mc_mean.csv", "mc_bound.csv", "plot_mean_s.csv"):
        assert (out / f).exists()


@pytest.mark.filterwarnings("ignore::chwave.errors.IndefiniteWeight")
def test_spectrum_runner(tmp_path):
    cfg = ExperimentConfig.from_dict({"domain": {"L": 40.0, "n": 256},
                                      "time": {"dt": 1e-2, "T": 0.5, "output_stride": 10}})
    out = run_spectrum(cfg, tmp_path / "sp")
    m = manifest(out)
    assert m["status"] == "ok" and len(m["results"]["eigenvalues"]) == 3
    assert m["results"]["max_drift"] < 1e-2
    # too few snapshots for speeds: recorded as a note, not a failure
    assert any("emergent speeds" in n for n in m["notes"])


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = ExperimentConfig.from_dict(SMALL)
    d = default_output_dir("simulate-ch", cfg)
    assert d.parent == tmp_path / "root" and d.name.endswith("seed0")
    assert run_ch(cfg) == d and (d / "manifest.json").exists()


# command line -----------------------------------------------------------------

def test_cli_round_trip(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(small(noise={
        "modes": [{"type": "constant", "c": 0.2}]}, mc={"n_paths": 5})))
    rc = cli.main(["simulate-sch", "--config", str(tmp_path / "c.json"), "--out",
                   str(tmp_path / "o"), "--seed", "11", "--paths", "2"])
    assert rc == 0 and "ok" in capsys.readouterr().out
    m = manifest(tmp_path / "o")
    assert m["seed"] == 11 and m["results"]["n_paths"] == 2
    rc = cli.main(["simulate-sch", "--config", str(tmp_path / "o" / "manifest.json"),
                   "--out", str(tmp_path / "o2")])
    assert rc == 0 and manifest(tmp_path / "o2")["content_hash"] == m["content_hash"]


def test_cli_reports_config_errors(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"domain": {"n": 3}, "time": {"T": -1}}))
    rc = cli.main(["simulate-ch", "--config", str(tmp_path / "c.json"),
                   "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert rc == 2 and "domain.n" in err and "time.T" in err
    assert not (tmp_path / "o").exists()


def test_cli_failed_run_exit_code(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(small(time={"dt": 0.2, "T": 0.4})))
    assert cli.main(["simulate-ch", "--config", str(tmp_path / "c.json"),
                     "--out", str(tmp_path / "o")]) == 1
    assert "CFL" in capsys.readouterr().err
    assert manifest(tmp_path / "o")["status"] == "failed"


def test_cli_requires_verb_and_config():
    with pytest.raises(SystemExit):
        cli.main([])
    with pytest.raises(SystemExit):
        cli.main(["spectrum"])


@pytest.mark.slow
def test_gaussian_wave_train_emerges(tmp_path):
    cfg = ExperimentConfig.from_dict({"time": {"T": 20.0, "dt": 1e-3, "output_stride": 200}})
    out = run_ch(cfg, tmp_path / "fig")
    counts = np.loadtxt(out / "peaks.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.all(np.diff(counts) >= 0) and counts[-1] >= 2
    r = manifest(out)["results"]
    order = np.argsort(r["peak_heights"])[::-1]
    assert np.all(np.diff(np.asarray(r["peak_speeds"])[order]) < 0)

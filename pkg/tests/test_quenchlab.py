import math

import numpy as np
import pytest

from soqdyn.errors import ConfigError, NumericalError
from soqdyn.manifest import format_value, read_kv
from soqdyn.observables import MomentRecord
from soqdyn.model import ModelParams
from soqdyn.quenchlab import (ExperimentConfig, Kind, ehrenfest_time, fit_lambda, island_verdict,
                              load_config, load_quench, run_ehrenfest, run_lyapunov, run_poincare,
                              run_quench, save_config, spread_metric)
from soqdyn.quenchlab import cli, runs

SMALL = dict(vx=3.0, vy=4.0, xs=1.0, ys=2.0, t_f=2.0, prep_tau_max=2.0)


def _same(a, b):
    return {k: format_value(v) for k, v in a.to_dict().items()} == \
        {k: format_value(v) for k, v in b.to_dict().items()}


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


# config ------------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(kind=Kind.ISLAND, vx=20, vy=30, xs=20, h_list=(1, 2, 3), twa_n=10,
                           energy=-120.5)
    save_config(tmp_path / "c.txt", cfg)
    assert load_config(tmp_path / "c.txt") == cfg


def test_config_ignores_meta_and_rejects_unknown(tmp_path):
    (tmp_path / "c.txt").write_text("vx = 2\n# note\nmeta.build = x\nresult.lambda = 1\n")
    assert load_config(tmp_path / "c.txt").vx == 2.0
    (tmp_path / "d.txt").write_text("vz = 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "d.txt")
    (tmp_path / "e.txt").write_text("just words\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "e.txt")


@pytest.mark.parametrize("bad", [dict(vx=-1), dict(mode="quantum"), dict(n=100), dict(t_f=-1),
                                 dict(plane="x"), dict(n="many")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        cfg = ExperimentConfig(**bad)
        runs.choose_grid(cfg)


def test_reproduction_presets():
    sec = cli.config_from_args(cli.build_parser().parse_args(["poincare"]))
    assert (sec.vx, sec.vy, sec.energy, sec.n_seeds) == (30.0, 30.0, -192.0, 18)
    lyap = cli.config_from_args(cli.build_parser().parse_args(["lyapunov", "--energy", "-192"]))
    assert (lyap.vx, lyap.vy, lyap.energy) == (20.0, 30.0, -192.0)
    ehr = cli.config_from_args(cli.build_parser().parse_args(["ehrenfest"]))
    assert (ehr.xs, ehr.ys, ehr.h_list) == (19.0, 19.0, tuple(float(h) for h in range(1, 11)))


def test_flags_override_config_file(tmp_path):
    save_config(tmp_path / "c.txt", ExperimentConfig(vx=5.0, vy=6.0, t_f=3.0))
    args = cli.build_parser().parse_args(["quench", "--config", str(tmp_path / "c.txt"), "--vy", "7",
                                          "--seed", "4"])
    cfg = cli.config_from_args(args)
    assert (cfg.vx, cfg.vy, cfg.t_f, cfg.rng_seed) == (5.0, 7.0, 3.0, 4)


# quench bundles -------------------------------------------------------------------

def test_harmonic_control(tmp_path):
    cfg = ExperimentConfig(xs=5.0, t_f=10.0, out=str(tmp_path / "q"))
    res = run_quench(cfg)
    t = res.t
    assert np.max(np.abs(res.column("mx") - 5.0 * np.cos(t))) < 1e-3
    np.testing.assert_allclose(res.column("Dx"), 0.5, atol=1e-6)
    names = {p.name for p in (tmp_path / "q").iterdir()}
    assert {"moments.csv", "bloch.csv", "manifest.txt", "density_pos_t0.bin",
            "density_mom_t0.bin", "density_pos_tf.bin", "density_mom_tf.bin"} <= names


def test_manifest_reproduces_csvs(tmp_path):
    cfg = ExperimentConfig(**SMALL, twa_n=300, rng_seed=3, out=str(tmp_path / "a"))
    run_quench(cfg)
    again = load_config(tmp_path / "a" / "manifest.txt", out=str(tmp_path / "b"))
    run_quench(again)
    assert _csvs(tmp_path / "a") == _csvs(tmp_path / "b")
    man = read_kv(tmp_path / "a" / "manifest.txt")
    assert man["result.complete"] == "true" and "meta.build" in man and "meta.grid_n" in man


def test_reuse_loads_bundle(tmp_path, monkeypatch):
    cfg = ExperimentConfig(**SMALL, out=str(tmp_path / "a"))
    first = run_quench(cfg)
    monkeypatch.setattr(runs, "prepare_quasi_ground", None)  # would crash if recomputed
    again = run_quench(cfg, reuse=True)
    assert [r.E for r in again.records] == pytest.approx([r.E for r in first.records], rel=1e-11)
    np.testing.assert_array_equal(again.density_f["mom"], first.density_f["mom"])
    loaded = load_quench(tmp_path / "a")
    assert _same(loaded.config, cfg)


def test_cli_seed_determinism(tmp_path):
    base = ["quench", "--vx", "3", "--vy", "3", "--xs", "1", "--ys", "1", "--tf", "1",
            "--which", "ring", "--prep-tau-max", "1", "--twa-n", "200", "--seed", "7"]
    assert cli.main(base + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(base + ["--out", str(tmp_path / "b")]) == 0
    assert _csvs(tmp_path / "a") == _csvs(tmp_path / "b")
    assert len(_csvs(tmp_path / "a")) == 3


def test_cli_unknown_flag(capsys):
    assert cli.main(["quench", "--warp-drive", "9"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_config_error(tmp_path, capsys):
    assert cli.main(["quench", "--vx", "-3", "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_numerical_error(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("norm drift")

    monkeypatch.setattr(runs, "run_quench", boom)
    assert cli.main(["quench", "--out", str(tmp_path)]) == 3


def test_cli_empty_poincare(tmp_path):
    assert cli.main(["poincare", "--n-seeds", "0", "--out", str(tmp_path)]) == 0
    rows = [l for l in (tmp_path / "section.txt").read_text().splitlines() if not l.startswith("#")]
    assert rows == []


def test_small_poincare_and_lyapunov(tmp_path):
    cfg = ExperimentConfig(kind=Kind.POINCARE, vx=20, vy=30, energy=-88.0, n_seeds=2,
                           section_tf=200.0, plane="y", out=str(tmp_path / "p"))
    res = run_poincare(cfg)
    assert len(res["verdicts"]) == 2
    assert (tmp_path / "p" / "seeds.csv").exists()
    lres = run_lyapunov(cfg.with_(kind=Kind.LYAPUNOV, lyap_T=50.0, out=str(tmp_path / "l")))
    assert len(lres["lambdas"]) == 2
    assert (tmp_path / "l" / "lyapunov_seed1.txt").exists()


# island verdict ---------------------------------------------------------------------

def _records(t, Dx, Dy, E=-100.0):
    return [MomentRecord(tt, 0, 0, 0, 0, 0, 0, 0, 0, a, b, E, 0, 0, 0) for tt, a, b in zip(t, Dx, Dy)]


def test_island_verdicts():
    p = ModelParams(20.0, 30.0)
    t = np.linspace(0, 400, 801)
    flat = _records(t, 5 + 0.1 * np.sin(t), np.full_like(t, 5.0))
    assert island_verdict(flat, p, reference=1000.0)[0] == "REGULAR"
    big = _records(t, np.full_like(t, 30.0), np.full_like(t, 30.0))
    assert island_verdict(big, p, reference=1000.0)[0] == "THERMALIZED"
    growing = _records(t, 1 + t / 20, np.full_like(t, 1.0))
    v, ratio, growth, _ = island_verdict(growing, p, reference=1000.0)
    assert v == "THERMALIZED" and growth > 0.1 and ratio < 0.25
    # truncated evaluation window
    assert island_verdict(growing, p, t_end=40.0, reference=1000.0)[0] == "THERMALIZED"


# Ehrenfest fit -------------------------------------------------------------------------

def _synthetic(lam, hs, t):
    shape = lambda s: 1 + 100 / (1 + np.exp(-(s - 40) / 5))  # noqa: E731
    return np.array([shape(t + math.log(h) / lam) for h in hs])


def test_fit_recovers_lambda():
    hs = np.arange(1, 11, dtype=float)
    t = np.arange(0, 120.5, 0.5)
    curves = _synthetic(0.18, hs, t)
    lam, S, S0, edge = fit_lambda(t, curves, hs)
    assert lam == pytest.approx(0.18, rel=0.02)
    assert S < S0 and not edge
    assert spread_metric(t, curves, hs, math.inf) == pytest.approx(S0)


def test_fit_flags_boundary():
    hs = np.array([1.0, 2.0, 3.0])
    t = np.arange(0, 200.0, 0.5)
    curves = _synthetic(2.0, hs, t)
    assert fit_lambda(t, curves, hs)[3]


def test_onsets_non_increasing_for_synthetic_curves():
    hs = np.arange(1, 11, dtype=float)
    t = np.arange(0, 120.5, 0.5)
    on = runs.onset_times(t, _synthetic(0.18, hs, t))
    assert np.all(np.diff(on) <= 0)


def test_shift_magnitude():
    assert math.log(10) / 0.18 == pytest.approx(12.8, abs=0.05)
    assert ehrenfest_time(0.18, 10 * math.e**0.18, 10.0) == pytest.approx(1.0)


def test_ehrenfest_preconditions(tmp_path):
    with pytest.raises(ConfigError):
        run_ehrenfest(ExperimentConfig(h_list=(1.0, 2.0), out=str(tmp_path)))
    with pytest.raises(ConfigError):
        run_ehrenfest(ExperimentConfig(mode="full", out=str(tmp_path)))


def test_small_ehrenfest_pipeline(tmp_path):
    cfg = ExperimentConfig(kind=Kind.EHRENFEST, vx=3.0, vy=4.0, xs=2.0, ys=2.0, t_f=4.0,
                           h_list=(1.0, 1.5, 2.0), prep_tau_max=2.0, out=str(tmp_path))
    res = run_ehrenfest(cfg)
    assert res.curves.shape == (3, len(res.t))
    assert res.spread_shifted <= res.spread_unshifted
    man = read_kv(tmp_path / "manifest.txt")
    assert float(man["result.lambda"]) == res.lam
    assert (tmp_path / "ehrenfest.csv").exists()


def test_format_value_numpy_scalars():
    assert format_value([np.float64(4.0), np.int64(3)]) == "4.0,3"
    assert format_value(np.bool_(False)) == "false"

"""Experiment drivers: quench bundles, island verdicts, Ehrenfest scaling,
Poincare and Lyapunov scans, TWA runs.

Every driver writes its outputs plus ``manifest.txt`` under ``config.out``.
The manifest holds the full config (plain keys), provenance (``meta.*``) and
headline results (``result.*``); feeding it back through
:func:`~soqdyn.quenchlab.config.load_config` reproduces the CSV outputs
byte for byte.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .. import _kernels, classical, twa
from ..errors import ConfigError
from ..grid import Direction, Grid2D, Space, grid_for_energy, make_grid, read_density, transform, write_density
from ..manifest import build_id, format_value, read_kv, write_kv
from ..model import ModelParams, accessible_region
from ..observables import (MOMENT_COLUMNS, MomentObserver, MomentRecord, bloch_approx,
                           edge_mass)
from ..qprop import Minimum, Mode, PropagatorConfig, evolve, prepare_quasi_ground
from .config import ExperimentConfig, Kind

__all__ = [
    "QuenchResult",
    "IslandResult",
    "EhrenfestResult",
    "choose_grid",
    "estimate_energy",
    "run_quench",
    "load_quench",
    "island_verdict",
    "run_island",
    "spread_metric",
    "fit_lambda",
    "onset_times",
    "run_ehrenfest",
    "run_poincare",
    "run_lyapunov",
    "run_twa",
    "ehrenfest_time",
]

log = logging.getLogger("soqdyn.quenchlab")

RING_TAU_MAX = 20.0
# config keys that never change results
_NOT_RESULT_KEYS = ("out", "workers")


def _pmap(fn, items, workers: int):
    """Ordered map, in worker processes when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def estimate_energy(params: ModelParams) -> float:
    """Rough post-quench energy: trap shift energy + band minimum + zero point."""
    return 0.5 * (params.xs**2 + params.ys**2) + params.minimum_energy + params.h


def choose_grid(config: ExperimentConfig) -> Grid2D:
    p = config.params
    if config.n and config.extent:
        return make_grid(config.n, config.extent, p.h)
    auto = grid_for_energy(p.v_max, estimate_energy(p), p.h, margin=config.margin,
                           tail=config.tail, balance=True)
    if config.extent:
        return make_grid(config.n or auto.n, config.extent, p.h)
    if config.n:
        # keep the aspect of the automatic boxes
        scale = math.sqrt(config.n / auto.n)
        return make_grid(config.n, auto.extent_x * scale, p.h)
    return auto


def _steps(config: ExperimentConfig):
    dt = config.time_step
    cadence = max(1, int(round(config.sample_dt / dt)))
    nsteps = int(round(config.t_f / dt))
    if abs(nsteps * dt - config.t_f) > 1e-9 * max(1.0, config.t_f):
        raise ConfigError(f"t_f={config.t_f} is not a multiple of dt={dt}")
    return dt, cadence


def _manifest_matches(path: Path, config: ExperimentConfig) -> bool:
    if not path.exists():
        return False
    raw = read_kv(path)
    if raw.get("result.complete") != "true":
        return False
    ref = {k: format_value(v) for k, v in config.to_dict().items()}
    return all(raw.get(k) == v for k, v in ref.items() if k not in _NOT_RESULT_KEYS)


@dataclass
class QuenchResult:
    """Outputs of one quench run (also reconstructible from its bundle)."""

    config: ExperimentConfig
    grid: Grid2D
    records: list
    density0: dict
    density_f: dict
    manifest: dict
    out: Path
    final_state: object = None
    initial_state: object = None
    twa: dict | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")


def _read_moments(path) -> list:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != MOMENT_COLUMNS:
        raise ConfigError(f"{path}: unexpected moment columns")
    return [MomentRecord(*map(float, r)) for r in rows[1:]]


def _read_table(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))


def load_quench(out) -> QuenchResult:
    """Rebuild a :class:`QuenchResult` (without wave functions) from a bundle."""
    from .config import load_config

    out = Path(out)
    config = load_config(out / "manifest.txt")
    manifest = read_kv(out / "manifest.txt")
    records = _read_moments(out / "moments.csv")
    dens0, densf = {}, {}
    grid = None
    for tag, store in (("t0", dens0), ("tf", densf)):
        for sp in ("pos", "mom"):
            f = out / f"density_{sp}_{tag}.bin"
            if f.exists():
                grid, d, _ = read_density(f)
                store[sp] = d
    if grid is None:
        grid = make_grid(int(manifest["meta.grid_n"]), float(manifest["meta.grid_extent"]), config.h)
    twa_out = None
    if (out / "twa_moments.csv").exists():
        cols, data = _read_table(out / "twa_moments.csv")
        twa_out = {"columns": cols, "data": data}
        f = out / "twa_density_mom_tf.bin"
        if f.exists():
            twa_out["density_mom_tf"] = read_density(f)[1]
            twa_out["density_pos_tf"] = read_density(out / "twa_density_pos_tf.bin")[1]
        if "result.twa_failed" in manifest:
            twa_out["failed"] = int(manifest["result.twa_failed"])
    return QuenchResult(config, grid, records, dens0, densf, manifest, out, twa=twa_out)


def _densities(state):
    mom = transform(state.field, Direction.TO_MOMENTUM)
    return {"pos": state.field.density(), "mom": mom.density()}


def _dump(out: Path, grid: Grid2D, dens: dict, tag: str, prefix: str = "density"):
    write_density(out / f"{prefix}_pos_{tag}.bin", grid, dens["pos"], Space.POSITION)
    write_density(out / f"{prefix}_mom_{tag}.bin", grid, dens["mom"], Space.MOMENTUM)


def _write_bloch(path, params: ModelParams, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "Rx", "Ry", "Rz", "Rx_approx", "Ry_approx"])
        for r in records:
            try:
                a = bloch_approx(params, (r.mpx, r.mpy))
                ax, ay = a.Rx, a.Ry
            except ConfigError:
                ax = ay = math.nan
            w.writerow([f"{v:.12e}" for v in (r.t, r.Rx, r.Ry, r.Rz, ax, ay)])


def run_quench(config: ExperimentConfig, reuse: bool = False, keep_states: bool = False) -> QuenchResult:
    """Prepare in the shifted trap, quench to the centred trap, evolve, record.

    Outputs: ``moments.csv``, ``bloch.csv``, density dumps at ``t = 0`` and
    ``t_f``, optional TWA outputs (``twa_n > 0``) and ``manifest.txt``.
    With ``reuse`` a complete bundle with an identical config is loaded
    instead of recomputed.
    """
    out = Path(config.out)
    if reuse and _manifest_matches(out / "manifest.txt", config):
        log.info("reusing bundle %s", out)
        return load_quench(out)
    out.mkdir(parents=True, exist_ok=True)
    params = config.params
    grid = choose_grid(config)
    dt, cadence = _steps(config)
    which = config.which
    tau_max = config.prep_tau_max or (RING_TAU_MAX if which is Minimum.RING_RANDOM_PHASE else None)
    log.info("quench %s: grid n=%d extent=%.4g dt=%g", out, grid.n, grid.extent_x, dt)
    prep = prepare_quasi_ground(params, config.mode, which, grid=grid, dtau=config.prep_dtau,
                                tau_max=tau_max, rng_seed=config.rng_seed)
    state0 = prep.state
    dens0 = _densities(state0)
    edge0 = edge_mass(state0)
    obs = MomentObserver(out / "moments.csv")
    pcfg = PropagatorConfig(dt, config.mode, cadence)
    try:
        final = evolve(state0, pcfg, config.t_f, [obs])
    finally:
        obs.close()
    densf = _densities(final)
    edgef = edge_mass(final)
    if config.dump_densities:
        _dump(out, grid, dens0, "t0")
        _dump(out, grid, densf, "tf")
    _write_bloch(out / "bloch.csv", params, obs.records)
    recs = obs.records
    meta = {
        "meta.build": build_id(),
        "meta.backend": _kernels.BACKEND,
        "meta.grid_n": grid.n,
        "meta.grid_extent": grid.extent_x,
        "meta.grid_extent_p": grid.extent_p,
        "meta.dt": dt,
        "meta.cadence": cadence,
        "meta.prep_steps": prep.steps,
        "meta.prep_converged": prep.converged,
        "meta.prep_tau_max": tau_max if tau_max is not None else 0.0,
        "meta.seed_angle": prep.seed_angle if prep.seed_angle is not None else "",
        "meta.twa_jitter": "uniform-cell",
        "result.energy_t0": recs[0].E,
        "result.energy_tf": recs[-1].E,
        "result.energy_drift": max(abs(r.E - recs[0].E) for r in recs) / max(abs(recs[0].E), 1.0),
        "result.edge_mass_t0_pos": edge0["position"],
        "result.edge_mass_t0_mom": edge0["momentum"],
        "result.edge_mass_tf_pos": edgef["position"],
        "result.edge_mass_tf_mom": edgef["momentum"],
    }
    twa_out = None
    if config.twa_n > 0:
        twa_out = _run_twa_from_state(config, state0, out, np.array([r.t for r in recs]), meta)
    meta["result.complete"] = True
    data = config.to_dict()
    data.update(meta)
    write_kv(out / "manifest.txt", data)
    return QuenchResult(config, grid, recs, dens0, densf, read_kv(out / "manifest.txt"), out,
                        final if keep_states else None, state0 if keep_states else None, twa_out)


def _run_twa_from_state(config, state0, out: Path, times, meta):
    params = config.params.replace(xs=0.0, ys=0.0)
    ens = twa.sample_initial(state0, config.twa_n, config.rng_seed)
    res = twa.propagate_ensemble(params, ens, config.t_f, config.tol, snapshot_times=times)
    twa.write_moments_csv(out / "twa_moments.csv", res, include_initial=ens)
    grid = state0.grid
    dpos = twa.ensemble_density(res.final, grid, Space.POSITION)
    dmom = twa.ensemble_density(res.final, grid, Space.MOMENTUM)
    write_density(out / "twa_density_pos_tf.bin", grid, dpos, Space.POSITION)
    write_density(out / "twa_density_mom_tf.bin", grid, dmom, Space.MOMENTUM)
    meta["result.twa_failed"] = res.failed
    meta["result.twa_n"] = ens.n
    cols, data = _read_table(out / "twa_moments.csv")
    return {"columns": cols, "data": data, "density_mom_tf": dmom, "density_pos_tf": dpos,
            "failed": res.failed}


def run_twa(config: ExperimentConfig) -> dict:
    """Stand-alone TWA run from the prepared quasi-ground state."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    params = config.params
    grid = choose_grid(config)
    which = config.which
    tau_max = config.prep_tau_max or (RING_TAU_MAX if which is Minimum.RING_RANDOM_PHASE else None)
    prep = prepare_quasi_ground(params, config.mode, which, grid=grid, dtau=config.prep_dtau,
                                tau_max=tau_max, rng_seed=config.rng_seed)
    n = config.twa_n or 50_000
    cfg = config.with_(twa_n=n)
    times = np.arange(1, int(round(config.t_f / config.sample_dt)) + 1) * config.sample_dt
    meta = {"meta.build": build_id(), "meta.backend": _kernels.BACKEND,
            "meta.grid_n": grid.n, "meta.grid_extent": grid.extent_x,
            "meta.twa_jitter": "uniform-cell"}
    res = _run_twa_from_state(cfg, prep.state, out, times, meta)
    meta["result.complete"] = True
    data = cfg.to_dict()
    data.update(meta)
    write_kv(out / "manifest.txt", data)
    return res


# ----------------------------------------------------------------------------
# island verdict


@dataclass
class IslandResult:
    verdict: str
    area_ratio: float
    growth: float
    reference_area: float
    t_end: float
    bundle: QuenchResult


def island_verdict(records, params: ModelParams, t_end: float | None = None,
                   area_fraction: float = 0.25, growth_tol: float = 0.1,
                   reference=None):
    """Classify a run as ``REGULAR`` or ``THERMALIZED`` at ``t_end``.

    ``REGULAR`` needs both ``Dx*Dy < area_fraction * A`` with ``A`` the
    microcanonical shell area product at the run energy, and no sustained
    growth of ``Dx`` over the last quarter of ``[0, t_end]``.  Growth is the
    relative rise of a least-squares line through ``Dx`` over that quarter.

    Returns ``(verdict, area_ratio, growth, A)``.
    """
    t = np.array([r.t for r in records])
    if t_end is None:
        t_end = float(t[-1])
    sel = t <= t_end + 1e-9
    t = t[sel]
    Dx = np.array([r.Dx for r in records])[sel]
    Dy = np.array([r.Dy for r in records])[sel]
    if reference is None:
        ax, ay = classical.shell_areas(params.replace(xs=0.0, ys=0.0), records[0].E)
        reference = ax * ay
    ratio = float(Dx[-1] * Dy[-1] / reference)
    q = t >= 0.75 * t[-1]
    slope, icpt = np.polyfit(t[q], Dx[q], 1)
    span = t[q][-1] - t[q][0]
    growth = float(slope * span / np.mean(Dx[q]))
    regular = ratio < area_fraction and growth <= growth_tol
    return ("REGULAR" if regular else "THERMALIZED"), ratio, growth, float(reference)


def run_island(config: ExperimentConfig, reuse: bool = False, t_end: float | None = None) -> IslandResult:
    bundle = run_quench(config, reuse=reuse)
    verdict, ratio, growth, ref = island_verdict(
        bundle.records, config.params, t_end, config.area_fraction, config.growth_tol)
    write_kv(Path(config.out) / "verdict.txt", {
        "verdict": verdict, "area_ratio": ratio, "growth": growth, "reference_area": ref,
        "t_end": t_end if t_end is not None else config.t_f,
        "area_fraction": config.area_fraction, "growth_tol": config.growth_tol})
    return IslandResult(verdict, ratio, growth, ref, t_end or config.t_f, bundle)


# ----------------------------------------------------------------------------
# Ehrenfest scaling


def _shifted(t, curve, delta, tau):
    # curve held at its initial value before t = 0
    return np.interp(tau - delta, t, curve, left=curve[0], right=curve[-1])


def spread_metric(t, curves, h_values, lam: float) -> float:
    """Mean over ``t`` of the across-``h`` variance of ``Dx_h(t - ln(h)/lam)``.

    ``lam = inf`` (or 0 shift) gives the unshifted spread.
    """
    t = np.asarray(t, float)
    C = np.asarray(curves, float)
    if not np.isfinite(lam):
        return float(np.mean(np.var(C, axis=0)))
    shifted = np.array([_shifted(t, c, math.log(h) / lam, t) for c, h in zip(C, h_values)])
    return float(np.mean(np.var(shifted, axis=0)))


def _golden(f, a, b, tol=1e-4, maxit=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxit):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_lambda(t, curves, h_values, lo: float = 0.02, hi: float = 1.0, n_scan: int = 60):
    """Minimise :func:`spread_metric` over ``lam`` in ``[lo, hi]``.

    A logarithmic scan brackets the global minimum, golden-section search
    refines it.  Returns ``(lam, S(lam), S(inf), at_boundary)``.
    """
    f = lambda lam: spread_metric(t, curves, h_values, lam)  # noqa: E731
    grid = np.geomspace(lo, hi, n_scan)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_scan - 1)]
    lam = _golden(f, a, b)
    S = f(lam)
    if vals[i] < S:
        lam, S = float(grid[i]), float(vals[i])
    at_boundary = lam <= lo * 1.02 or lam >= hi / 1.02
    return float(lam), float(S), f(math.inf), bool(at_boundary)


def onset_times(t, curves, factor: float = 2.0) -> np.ndarray:
    """First time each curve exceeds ``factor`` times its initial value (NaN if never)."""
    out = []
    for c in np.asarray(curves, float):
        idx = np.nonzero(c > factor * c[0])[0]
        out.append(float(t[idx[0]]) if idx.size else math.nan)
    return np.array(out)


@dataclass
class EhrenfestResult:
    h_values: np.ndarray
    t: np.ndarray
    curves: np.ndarray
    lam: float
    spread_shifted: float
    spread_unshifted: float
    at_boundary: bool
    onsets: np.ndarray
    bundles: list = field(default_factory=list)


def run_ehrenfest(config: ExperimentConfig, reuse: bool = False) -> EhrenfestResult:
    """Quench runs for every ``h`` in ``config.h_list`` and the ``lam`` fit."""
    hs = np.array(config.h_list, float)
    if len(hs) < 3:
        raise ConfigError("the Ehrenfest experiment needs at least three h values")
    if config.mode is not Mode.ADIABATIC:
        raise ConfigError("the Ehrenfest experiment runs the adiabatic model")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    subs = [config.with_(h=float(h), out=str(out / f"h_{h:g}"), kind=Kind.QUENCH, workers=1)
            for h in hs]
    bundles = _pmap(partial(run_quench, reuse=reuse), subs, config.workers)
    t = bundles[0].t
    for b in bundles:
        if len(b.t) != len(t) or np.max(np.abs(b.t - t)) > 1e-9:
            raise ConfigError("Ehrenfest runs have different sample times")
    curves = np.array([b.column("Dx") for b in bundles])
    lam, S, S0, edge = fit_lambda(t, curves, hs)
    onsets = onset_times(t, curves)
    with open(out / "ehrenfest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"Dx_h{h:g}" for h in hs])
        for j in range(len(t)):
            w.writerow([f"{t[j]:.12e}"] + [f"{c[j]:.12e}" for c in curves])
    data = config.to_dict()
    data.update({"meta.build": build_id(), "meta.backend": _kernels.BACKEND,
                 "result.lambda": lam, "result.spread_shifted": S, "result.spread_unshifted": S0,
                 "result.at_boundary": edge, "result.onsets": list(onsets), "result.complete": True})
    write_kv(out / "manifest.txt", data)
    return EhrenfestResult(hs, t, curves, lam, S, S0, edge, onsets, bundles)


def ehrenfest_time(lam: float, area: float, h: float) -> float:
    """``T_E = ln(V/h)/lam``."""
    return math.log(area / h) / lam


# ----------------------------------------------------------------------------
# classical scans


def _shell_energy(config: ExperimentConfig) -> float:
    if math.isfinite(config.energy):
        return config.energy
    p = config.params
    return 0.5 * (p.xs**2 + p.ys**2) + p.minimum_energy


def _shell_seeds(config: ExperimentConfig):
    p = config.params.replace(xs=0.0, ys=0.0)
    E = _shell_energy(config)
    if config.n_seeds == 0:
        return p, E, np.zeros((0, 4))
    return p, E, classical.sample_energy_shell(p, E, config.n_seeds, config.rng_seed)


def run_poincare(config: ExperimentConfig) -> dict:
    """Section of ``n_seeds`` shell trajectories; writes ``section.txt`` and a summary."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    p, E, seeds = _shell_seeds(config)
    plane = classical.Plane(config.plane)
    sec = classical.poincare_section(p, seeds, plane, t_f=config.section_tf, tol=config.tol,
                                     max_crossings=config.max_crossings)
    if len(seeds) == 0:
        sec.energy = E
    classical.write_section(out / "section.txt", sec)
    verdicts = classical.passes_closed_curve(sec) if len(seeds) else []
    with open(out / "seeds.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed_index", "x", "px", "y", "py", "crossings", "curve_residual", "closed_curve"])
        for i, z in enumerate(seeds):
            w.writerow([i] + [f"{v:.12e}" for v in z]
                       + [len(sec.t[i]), f"{verdicts[i][1]:.6e}", int(verdicts[i][0])])
    data = config.to_dict()
    data.update({"meta.build": build_id(), "meta.backend": _kernels.BACKEND,
                 "result.energy": E, "result.n_seeds": len(seeds),
                 "result.closed_curves": sum(int(v[0]) for v in verdicts),
                 "result.complete": True})
    write_kv(out / "manifest.txt", data)
    return {"section": sec, "verdicts": verdicts, "energy": E, "seeds": seeds}


def run_lyapunov(config: ExperimentConfig) -> dict:
    """Lyapunov exponent per shell seed; chaotic seeds have ``lam > lam_chaos``."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    p, E, seeds = _shell_seeds(config)
    job = partial(classical.max_lyapunov, p, T=config.lyap_T, renorm_dt=config.renorm_dt,
                  tol=config.tol)
    results = _pmap(job, list(seeds), config.workers)
    for i, r in enumerate(results):
        classical.write_lyapunov(out / f"lyapunov_seed{i}.txt", r)
    lams = np.array([r.lam for r in results])
    chaotic = lams > config.lam_chaos
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed_index", "x", "px", "y", "py", "lambda", "converged", "chaotic"])
        for i, (z, r) in enumerate(zip(seeds, results)):
            w.writerow([i] + [f"{v:.12e}" for v in z]
                       + [f"{r.lam:.12e}", int(r.converged), int(chaotic[i])])
    med = float(np.median(lams[chaotic])) if np.any(chaotic) else math.nan
    data = config.to_dict()
    data.update({"meta.build": build_id(), "meta.backend": _kernels.BACKEND,
                 "result.energy": E, "result.lambda_median_chaotic": med,
                 "result.n_chaotic": int(np.count_nonzero(chaotic)), "result.complete": True})
    write_kv(out / "manifest.txt", data)
    return {"lambdas": lams, "chaotic": chaotic, "median_chaotic": med, "results": results,
            "energy": E, "seeds": seeds}

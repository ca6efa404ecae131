"""Truncated Wigner ensembles: sample, propagate classically, histogram.

Positions are drawn from ``|psi(x, y)|^2`` and momenta independently from
``|phi(p_x, p_y)|^2``.  This loses the position-momentum correlations of the
true Wigner function; it is the reference prescription and is kept on
purpose.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import classical
from .errors import ConfigError
from .grid import Grid2D, Space
from .model import ModelParams

__all__ = [
    "Ensemble",
    "PropagationResult",
    "sample_initial",
    "propagate_ensemble",
    "ensemble_density",
    "ensemble_moments",
    "write_moments_csv",
    "TWA_MOMENT_COLUMNS",
]

TWA_MOMENT_COLUMNS = ("t", "mean_x", "mean_y", "mean_px", "mean_py",
                      "var_x", "var_y", "var_px", "var_py")


@dataclass
class Ensemble:
    """``N`` equally weighted phase points ``(x, p_x, y, p_y)``."""

    points: np.ndarray
    rng_seed: int | None = None
    source: dict = field(default_factory=dict)
    t: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 4)
        if len(self.points) < 1:
            raise ConfigError("an ensemble needs at least one point")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def _sample_cells(rng, density, axis_a, axis_b, d, n):
    """Inverse-CDF draw of grid cells with uniform jitter inside each cell."""
    w = np.asarray(density, dtype=float).ravel()
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = rng.random(n)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, w.size - 1)
    ia, ib = np.divmod(idx, len(axis_b))
    ja = rng.uniform(-0.5, 0.5, n) * d
    jb = rng.uniform(-0.5, 0.5, n) * d
    return axis_a[ia] + ja, axis_b[ib] + jb


def sample_initial(state, N: int, rng_seed: int | None = 0) -> Ensemble:
    """Draw ``N`` phase points from the marginals of a normalised state.

    Deterministic for a given ``rng_seed`` (PCG64).  Positions use the
    position density, momenta the momentum density; cell jitter is uniform.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    grid: Grid2D = state.grid
    rng = np.random.default_rng(rng_seed)
    arrays = state.arrays()
    rho_x = sum(np.abs(a) ** 2 for a in arrays)
    rho_p = sum(np.abs(sfft.fft2(a)) ** 2 for a in arrays)
    x, y = _sample_cells(rng, rho_x, grid.x, grid.x, grid.dx, N)
    px, py = _sample_cells(rng, rho_p, grid.p_fft, grid.p_fft, grid.dp, N)
    pts = np.column_stack([x, px, y, py])
    src = {"grid_n": grid.n, "extent": grid.extent_x, "h": grid.h, "jitter": "uniform-cell"}
    return Ensemble(pts, rng_seed, src)


@dataclass
class PropagationResult:
    """Final ensemble, optional snapshots and the per-point failure count."""

    final: Ensemble
    times: np.ndarray
    snapshots: np.ndarray
    failed: int
    status: np.ndarray

    @property
    def failed_fraction(self) -> float:
        return self.failed / max(len(self.status), 1)


def propagate_ensemble(params: ModelParams, ensemble: Ensemble, t_f: float,
                       tol: float = classical.DEFAULT_TOL, snapshot_times=None,
                       max_steps: int = classical.DEFAULT_MAX_STEPS) -> PropagationResult:
    """Integrate every point independently to ``t_f``.

    Points whose integration fails are excluded from the final ensemble and
    counted in ``failed``; their snapshot rows are NaN from the failure on.
    """
    if t_f < 0:
        raise ConfigError("t_f must be non-negative")
    times = np.array([] if snapshot_times is None else snapshot_times, dtype=float)
    times = np.union1d(times[(times > 0) & (times < t_f)], [t_f]) if t_f > 0 else np.array([])
    if times.size == 0:
        snaps = ensemble.points[None].copy()
        status = np.zeros(ensemble.n, dtype=np.int32)
        return PropagationResult(Ensemble(ensemble.points.copy(), ensemble.rng_seed,
                                          dict(ensemble.source), ensemble.t),
                                 np.array([ensemble.t]), snaps, 0, status)
    snaps, status = classical.integrate_batch(params, ensemble.points, times, tol, max_steps)
    ok = status == 0
    failed = int(np.count_nonzero(~ok))
    if not np.any(ok):
        raise ConfigError("every ensemble point failed to integrate")
    final = Ensemble(snaps[-1, ok], ensemble.rng_seed, dict(ensemble.source, failed=failed),
                     ensemble.t + t_f)
    return PropagationResult(final, ensemble.t + times, snaps, failed, status)


def ensemble_density(points, grid: Grid2D, space=Space.POSITION) -> np.ndarray:
    """Normalised 2D histogram on the grid cells (``sum * cell_area = 1``).

    Cells are centred on the grid points of the chosen representation;
    points outside the box are ignored before normalising.
    """
    if isinstance(points, Ensemble):
        points = points.points
    pts = np.asarray(points, dtype=float).reshape(-1, 4)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    space = Space(space)
    if space is Space.POSITION:
        axis, d, a, b = grid.x, grid.dx, pts[:, 0], pts[:, 2]
    else:
        axis, d, a, b = grid.p, grid.dp, pts[:, 1], pts[:, 3]
    edges = np.concatenate([axis - 0.5 * d, [axis[-1] + 0.5 * d]])
    H, _, _ = np.histogram2d(a, b, bins=[edges, edges])
    total = H.sum()
    if total == 0:
        return H
    return H / (total * d * d)


def ensemble_moments(points, t: float = 0.0):
    pts = np.asarray(points.points if isinstance(points, Ensemble) else points, float)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    m = pts.mean(axis=0)
    v = pts.var(axis=0)
    return (float(t), m[0], m[2], m[1], m[3], v[0], v[2], v[1], v[3])


def write_moments_csv(path, result: PropagationResult, include_initial: Ensemble | None = None):
    """CSV ``t mean_x mean_y mean_px mean_py var_x var_y var_px var_py``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TWA_MOMENT_COLUMNS)
        if include_initial is not None:
            w.writerow([f"{v:.12e}" for v in ensemble_moments(include_initial, include_initial.t)])
        ok = result.status == 0
        for t, snap in zip(result.times, result.snapshots):
            w.writerow([f"{v:.12e}" for v in ensemble_moments(snap[ok], t)])

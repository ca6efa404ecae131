"""Classical dynamics of the lower adiabatic Hamiltonian.

``H(x, p) = (x^2 + y^2)/2 + (p_x^2 + p_y^2)/2 - |B(p)|`` with
``B(p) = (v_x p_x, v_y p_y)``.  States are arrays ``(x, p_x, y, p_y)``.

Integration uses an adaptive Dormand-Prince 5(4) pair with dense output (see
:mod:`soqdyn._kernels`).  The ``|B|``-terms of the flow are set to zero at the
Dirac point ``p = 0``, a measure-zero regularisation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, IntegrationError
from .model import ModelParams, accessible_region

__all__ = [
    "PhasePoint",
    "Trajectory",
    "Plane",
    "SectionPoint",
    "Section",
    "LyapunovResult",
    "energy",
    "eom_rhs",
    "jacobian",
    "integrate",
    "integrate_batch",
    "sample_energy_shell",
    "shell_areas",
    "poincare_section",
    "closed_curve_residual",
    "passes_closed_curve",
    "max_lyapunov",
    "write_section",
    "write_lyapunov",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_STEPS = 50_000_000
CLOSED_CURVE_THRESHOLD = 0.02


@dataclass(frozen=True)
class PhasePoint:
    x: float
    px: float
    y: float
    py: float

    def __post_init__(self):
        for name in ("x", "px", "y", "py"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"phase point component {name} is not finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.px, self.y, self.py], dtype=float)

    @classmethod
    def from_array(cls, z) -> "PhasePoint":
        z = np.asarray(z, dtype=float)
        return cls(float(z[0]), float(z[1]), float(z[2]), float(z[3]))


def _as_state(z) -> np.ndarray:
    if isinstance(z, PhasePoint):
        return z.as_array()
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 4:
        raise ConfigError(f"phase-space state needs 4 components, got shape {z.shape}")
    return z


def energy(params: ModelParams, z):
    """Adiabatic energy of one state or of an ``(..., 4)`` array of states."""
    z = _as_state(z)
    x, px, y, py = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    b = np.sqrt((params.vx * px) ** 2 + (params.vy * py) ** 2)
    return 0.5 * (x * x + y * y) + 0.5 * (px * px + py * py) - b


def eom_rhs(params: ModelParams, z) -> np.ndarray:
    """``(xdot, pxdot, ydot, pydot)``; the ``|B|`` terms vanish at ``p = 0``."""
    return _kernels.backend.rhs_single(_as_state(z), params.vx, params.vy)


def jacobian(params: ModelParams, z) -> np.ndarray:
    """Analytic 4x4 Jacobian of :func:`eom_rhs` in ``(x, p_x, y, p_y)`` order."""
    z = _as_state(z)
    vx2, vy2 = params.vx**2, params.vy**2
    px, py = z[1], z[3]
    S = math.sqrt(vx2 * px * px + vy2 * py * py)
    if S > 0:
        jxx = 1.0 - vx2 / S + vx2 * vx2 * px * px / S**3
        jxy = vx2 * vy2 * px * py / S**3
        jyy = 1.0 - vy2 / S + vy2 * vy2 * py * py / S**3
    else:
        jxx, jxy, jyy = 1.0, 0.0, 1.0
    return np.array([
        [0.0, jxx, 0.0, jxy],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, jxy, 0.0, jyy],
        [0.0, 0.0, -1.0, 0.0],
    ])


@dataclass
class Trajectory:
    """Time-sampled classical trajectory.

    Attributes
    ----------
    t : ndarray
        Strictly increasing sample times.
    z : ndarray
        ``(len(t), 4)`` states.
    energy_0 : float
        Energy of the initial state.
    energy_drift : float
        ``max |E(t) - E_0|`` over the samples, divided by
        ``max(|E_0|, |z_0|^2/2, 1)`` (the size of the terms of ``H``).
    """

    t: np.ndarray
    z: np.ndarray
    energy_0: float
    energy_drift: float
    nsteps: int = 0

    @property
    def samples(self):
        return [(float(t), PhasePoint.from_array(z)) for t, z in zip(self.t, self.z)]

    def __len__(self):
        return len(self.t)


def _relative_drift(e, e0, z0):
    # near E = 0 the terms of H cancel; scale by their size instead
    scale = max(abs(e0), 0.5 * float(np.dot(z0, z0)), 1.0)
    return float(np.max(np.abs(e - e0))) / scale


def integrate(params: ModelParams, z0, t_f: float | None = None, tol: float = DEFAULT_TOL,
              t_eval=None, n_samples: int = 1001, max_steps: int = DEFAULT_MAX_STEPS) -> Trajectory:
    """Integrate one trajectory with dense output at ``t_eval``.

    Parameters
    ----------
    z0 : PhasePoint or array_like
    t_f : float, optional
        Final time; sample times default to ``n_samples`` uniform points on
        ``[0, t_f]``.
    tol : float
        Absolute and relative local error tolerance.
    t_eval : array_like, optional
        Explicit, strictly increasing, non-negative sample times.

    Raises
    ------
    IntegrationError
        On step-size underflow, non-finite states or an exhausted step budget;
        carries the failure time and last state.
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    z0 = _as_state(z0).astype(float)
    if t_eval is None:
        if t_f is None or t_f < 0:
            raise ConfigError("give a non-negative t_f or explicit t_eval")
        t_eval = np.linspace(0.0, t_f, n_samples)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval[0] < 0 or np.any(np.diff(t_eval) <= 0)):
        raise ConfigError("t_eval must be non-negative and strictly increasing")
    samples, nsteps, status, t_reached = _kernels.backend.integrate_dense(
        z0, 0.0, t_eval, params.vx, params.vy, tol, max_steps)
    if status != _kernels.OK:
        last = samples[np.isfinite(samples[:, 0])]
        raise IntegrationError(
            f"integration failed at t={t_reached:.6g}: {_kernels.STATUS_NAMES[status]}",
            t=t_reached, state=last[-1] if len(last) else z0)
    e0 = float(energy(params, z0))
    drift = _relative_drift(energy(params, samples), e0, z0) if len(samples) else 0.0
    return Trajectory(t_eval, samples, e0, drift, int(nsteps))


def integrate_batch(params: ModelParams, Z0, t_eval, tol: float = DEFAULT_TOL,
                    max_steps: int = DEFAULT_MAX_STEPS):
    """Integrate many independent trajectories, sampled at common times.

    Lanes are advanced segment by segment between consecutive sample times,
    each carrying its own step-size history, so results do not depend on the
    other lanes.

    Returns
    -------
    samples : ndarray
        ``(len(t_eval), N, 4)``; lanes that failed hold NaN from the failing
        segment on.
    status : ndarray
        Per-lane kernel status code (0 for success).
    """
    Z = np.array(Z0, dtype=float, copy=True).reshape(-1, 4)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval[0] < 0 or np.any(np.diff(t_eval) <= 0)):
        raise ConfigError("t_eval must be non-negative and strictly increasing")
    N = Z.shape[0]
    out = np.full((t_eval.size, N, 4), np.nan)
    h = np.zeros(N)
    status = np.zeros(N, dtype=np.int32)
    t_prev = 0.0
    kern = _kernels.backend
    for j, t in enumerate(t_eval):
        if t > t_prev:
            kern.advance_batch(Z, h, status, t_prev, float(t), params.vx, params.vy, tol, max_steps)
            t_prev = float(t)
        ok = status == 0
        out[j, ok] = Z[ok]
    return out, status


def sample_energy_shell(params: ModelParams, E: float, n: int, rng_seed: int | None = 0,
                        max_tries: int = 1000) -> np.ndarray:
    """Draw ``n`` states uniformly (microcanonically) on the shell ``H = E``.

    Integrating ``delta(E - H)`` over position leaves a constant weight on the
    momentum region ``p^2/2 - |B(p)| <= E``.  Momenta are therefore drawn by
    rejection from its bounding box, and positions on the circle
    ``r^2 = 2 (E - V(p))`` with uniform angle.
    """
    region = accessible_region(params, E)
    rng = np.random.default_rng(rng_seed)
    out = np.empty((0, 4))
    for _ in range(max_tries):
        if len(out) >= n:
            break
        m = max(4 * (n - len(out)), 64)
        px = rng.uniform(-region.px_max, region.px_max, m)
        py = rng.uniform(-region.py_max, region.py_max, m)
        v = 0.5 * (px * px + py * py) - np.sqrt((params.vx * px) ** 2 + (params.vy * py) ** 2)
        keep = v <= E
        px, py, v = px[keep], py[keep], v[keep]
        rho = np.sqrt(2.0 * (E - v))
        ang = rng.uniform(0.0, 2.0 * math.pi, px.size)
        pts = np.column_stack([rho * np.cos(ang), px, rho * np.sin(ang), py])
        out = np.vstack([out, pts])
    if len(out) < n:
        raise ConfigError(f"could not sample {n} shell points at E={E}")
    return out[:n]


def shell_areas(params: ModelParams, E: float, n: int = 200_000, rng_seed: int = 0):
    """Phase-space areas ``(sx*spx, sy*spy)`` of the microcanonical shell at ``E``.

    Standard deviations of the uniform shell distribution; the product of
    the two is the reference volume for a fully spread (thermalised) state.
    """
    pts = sample_energy_shell(params, E, n, rng_seed)
    sd = pts.std(axis=0)
    return float(sd[0] * sd[1]), float(sd[2] * sd[3])


class Plane(str, enum.Enum):
    Y_ZERO = "y"
    PY_ZERO = "py"

    @property
    def index(self) -> int:
        return 2 if self is Plane.Y_ZERO else 3


@dataclass(frozen=True)
class SectionPoint:
    plane: Plane
    coords: tuple
    crossing_sign: int
    t: float
    seed_index: int
    residual: float


@dataclass
class Section:
    """Crossings of a surface of section, grouped per seed."""

    plane: Plane
    energy: float
    seeds: np.ndarray
    t: list = field(default_factory=list)
    coords: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def points(self) -> list[SectionPoint]:
        pts = []
        for i, (t, c, s, r) in enumerate(zip(self.t, self.coords, self.signs, self.residuals)):
            for j in range(len(t)):
                pts.append(SectionPoint(self.plane, (float(c[j, 0]), float(c[j, 1])),
                                        int(s[j]), float(t[j]), i, float(r[j])))
        return pts

    def groups(self):
        """Yield ``(seed_index, sign, coords)`` for each crossing direction."""
        for i, (c, s) in enumerate(zip(self.coords, self.signs)):
            for sign in (1, -1):
                sel = s == sign
                if np.any(sel):
                    yield i, sign, c[sel]


def poincare_section(params: ModelParams, seeds, plane=Plane.PY_ZERO, t_f: float = 1000.0,
                     tol: float = DEFAULT_TOL, energy_tol: float = 1e-9,
                     max_crossings: int = 100_000, max_steps: int = DEFAULT_MAX_STEPS) -> Section:
    """Event-detected crossings of ``y = 0`` or ``p_y = 0`` for each seed.

    Seeds must share one energy (to ``energy_tol`` relative).  Crossings are
    bracketed on the dense interpolant and polished by Newton iteration with
    exact integrator steps.  Both directions are kept, tagged by the sign of
    the crossing velocity.  Reported coordinates are ``(x, p_x)``.

    Raises
    ------
    ConfigError
        If the seeds do not lie on a common energy shell.
    IntegrationError
        If a trajectory fails.
    """
    plane = Plane(plane)
    seeds = np.array([_as_state(s) for s in seeds], dtype=float).reshape(-1, 4)
    if len(seeds) == 0:
        return Section(plane, float("nan"), seeds)
    e = energy(params, seeds)
    e_ref = float(e[0])
    if np.max(np.abs(e - e_ref)) > energy_tol * max(abs(e_ref), 1.0):
        raise ConfigError("Poincare seeds are not on a common energy shell")
    sec = Section(plane, e_ref, seeds)
    idx = plane.index
    for i, z0 in enumerate(seeds):
        t, Z, s, status = _kernels.backend.section_crossings(
            z0, t_f, idx, params.vx, params.vy, tol, max_steps, max_crossings)
        if status != _kernels.OK:
            raise IntegrationError(
                f"seed {i}: {_kernels.STATUS_NAMES[status]}", t=float(t[-1]) if len(t) else None,
                state=z0)
        sec.t.append(np.asarray(t))
        sec.coords.append(np.asarray(Z)[:, [0, 1]] if len(t) else np.zeros((0, 2)))
        sec.signs.append(np.asarray(s))
        sec.residuals.append(np.abs(np.asarray(Z)[:, idx]) if len(t) else np.zeros(0))
    return sec


def closed_curve_residual(points) -> float:
    """Largest deviation of a point set from a 1D curve, relative to its size.

    For each point, the distance to the line through its two nearest
    neighbours is taken; the maximum is divided by the diameter of the set.
    Points on a smooth closed curve give values of order (spacing)^2, an
    area-filling scatter gives values of order spacing.  Sets of fewer than
    three distinct points are degenerate curves and return 0.
    """
    P = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    if len(P) < 3:
        return 0.0
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    diam = math.sqrt(float(d2.max()))
    if diam == 0.0:
        return 0.0
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1)[:, :2]
    a, b = P[nn[:, 0]], P[nn[:, 1]]
    u = b - a
    w = P - a
    cross = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
    dist = cross / np.maximum(np.hypot(u[:, 0], u[:, 1]), 1e-300)
    return float(dist.max() / diam)


def passes_closed_curve(section: Section, threshold: float = CLOSED_CURVE_THRESHOLD):
    """Per-seed verdict of the closed-curve test over both crossing directions.

    Returns a list of ``(passed, worst_residual)`` per seed.
    """
    worst = [0.0] * len(section.coords)
    for i, _, c in section.groups():
        worst[i] = max(worst[i], closed_curve_residual(c))
    return [(w < threshold, w) for w in worst]


@dataclass
class LyapunovResult:
    """Benettin estimate of the maximum Lyapunov exponent.

    ``lam`` averages the convergence series ``lam_T`` over its last tenth.
    ``converged`` is False when ``lam_T`` varies by more than 20% of ``lam``
    over the second half of the run.
    """

    lam: float
    T: np.ndarray
    lam_T: np.ndarray
    converged: bool
    z_final: np.ndarray

    @property
    def series(self):
        return np.column_stack([self.T, self.lam_T])


def max_lyapunov(params: ModelParams, z0, T: float = 2000.0, renorm_dt: float = 0.5,
                 tol: float = DEFAULT_TOL, w0=None, max_steps: int = DEFAULT_MAX_STEPS,
                 variation: float = 0.2) -> LyapunovResult:
    """Maximum Lyapunov exponent by tangent-flow renormalisation.

    The linearised flow is integrated with the analytic Jacobian alongside the
    trajectory; the tangent vector is renormalised every ``renorm_dt``.
    """
    if not (renorm_dt > 0 and T >= renorm_dt):
        raise ConfigError("need T >= renorm_dt > 0")
    z0 = _as_state(z0).astype(float)
    if w0 is None:
        w0 = np.array([1.0, 1.0, 1.0, 1.0]) / 2.0
    logs, zf, status = _kernels.backend.lyapunov_logs(
        z0, np.asarray(w0, float), T, renorm_dt, params.vx, params.vy, tol, max_steps)
    if status != _kernels.OK:
        raise IntegrationError(f"tangent flow failed: {_kernels.STATUS_NAMES[status]}",
                               t=len(logs) * renorm_dt, state=zf)
    Ts = renorm_dt * np.arange(1, len(logs) + 1)
    lam_T = np.cumsum(logs) / Ts
    tail = lam_T[-max(1, len(lam_T) // 10):]
    lam = float(np.mean(tail))
    half = lam_T[len(lam_T) // 2:]
    spread = float(np.max(half) - np.min(half))
    converged = spread <= variation * abs(lam) if lam != 0 else spread < 1e-12
    return LyapunovResult(lam, Ts, lam_T, bool(converged), zf)


def write_section(path, section: Section) -> Path:
    """ASCII table ``t x p_x sign seed_index``, one crossing per line."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# plane={section.plane.value} energy={section.energy!r}\n")
        fh.write("# t x p_x sign seed_index\n")
        for i, (t, c, s) in enumerate(zip(section.t, section.coords, section.signs)):
            for j in range(len(t)):
                fh.write(f"{t[j]:.12e} {c[j, 0]:.12e} {c[j, 1]:.12e} {int(s[j]):d} {i:d}\n")
    return path


def write_lyapunov(path, result: LyapunovResult) -> Path:
    """ASCII convergence series ``T lambda``."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# lambda={result.lam!r} converged={int(result.converged)}\n")
        fh.write("# T lambda\n")
        for T, lam in zip(result.T, result.lam_T):
            fh.write(f"{T:.6f} {lam:.12e}\n")
    return path

"""Split-operator propagation of the full spinor and the adiabatic scalar model.

Full model: ``H = r^2/2 + p^2/2 + W(p)`` with the 2x2 kernel
``W(p) = -(b_x sigma_x + b_y sigma_y)``, ``b = (v_x p_x, v_y p_y)`` (band
``mu`` has energy ``p^2/2 + mu |b|``; see :mod:`soqdyn.model`).  Adiabatic
model: ``H = r^2/2 + V_(p)``, ``V_(p) = p^2/2 - |b|``.  Both evolve under
``i h d/dt``.

One Strang step is a half position kick, a full momentum kick, and another
half position kick.  Consecutive half kicks between snapshots are fused.
Kicks act on the raw FFT of the position-space array; momentum phases are
tabulated in FFT order, so no shift phases are needed inside the loop.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import _kernels
from .errors import ConfigError, ConvergenceError, NumericalError
from .grid import Direction, Grid2D, ScalarField, Space, SpinorField, norm2, transform
from .model import ModelParams

__all__ = [
    "Mode",
    "Minimum",
    "QuantumState",
    "PropagatorConfig",
    "Propagator",
    "PrepResult",
    "spin_kick",
    "stable_dt",
    "step_full",
    "step_adiabatic",
    "prepare_quasi_ground",
    "evolve",
]

NORM_TOL = 1e-9


class Mode(str, enum.Enum):
    FULL = "full"
    ADIABATIC = "adiabatic"


class Minimum(str, enum.Enum):
    """Seed of the imaginary-time preparation.

    ``RIGHT`` and ``LEFT`` seed the minimum at ``+v`` and ``-v`` along the
    axis of the stronger coupling; ``RING_RANDOM_PHASE`` (isotropic coupling)
    seeds a uniformly random angle on the ring ``|p| = v``.
    """

    LEFT = "left"
    RIGHT = "right"
    RING_RANDOM_PHASE = "ring"


@dataclass
class QuantumState:
    """Position-space wave function at time ``t``.

    ``field`` is a :class:`SpinorField` for the full model and a
    :class:`ScalarField` for the adiabatic model.
    """

    field: object
    t: float
    params: ModelParams
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid2D:
        return self.field.grid

    @property
    def mode(self) -> Mode:
        return Mode.FULL if isinstance(self.field, SpinorField) else Mode.ADIABATIC

    def norm(self) -> float:
        return norm2(self.field)

    def copy(self) -> "QuantumState":
        return QuantumState(self.field.copy(), self.t, self.params, dict(self.meta))

    def arrays(self):
        if isinstance(self.field, SpinorField):
            return [self.field.up.values, self.field.down.values]
        return [self.field.values]

    def momentum_field(self):
        return transform(self.field, Direction.TO_MOMENTUM)


@dataclass(frozen=True)
class PropagatorConfig:
    """Time step, model and observer cadence (steps between snapshots)."""

    dt: float
    mode: Mode = Mode.ADIABATIC
    cadence: int = 1
    scheme: str = "strang"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if int(self.cadence) < 1:
            raise ConfigError("observer cadence must be >= 1")
        if self.scheme != "strang":
            raise ConfigError(f"unknown splitting scheme {self.scheme!r}")
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "cadence", int(self.cadence))


def spin_kick(params: ModelParams, p, dt: float) -> np.ndarray:
    """Exact ``exp(-i dt W(p)/h)`` for the SO kernel at fixed momentum.

    With ``W = -(b . sigma)`` this is ``cos(a) I + i sin(a) (b_hat . sigma)``,
    ``a = |b| dt / h``; the identity at ``b = 0``.
    """
    px, py = p
    bx, by = params.vx * px, params.vy * py
    b = math.hypot(bx, by)
    if b == 0.0:
        return np.eye(2, dtype=complex)
    a = b * dt / params.h
    c, s = math.cos(a), math.sin(a)
    nx, ny = bx / b, by / b
    return np.array([[c, 1j * s * (nx - 1j * ny)], [1j * s * (nx + 1j * ny), c]])


def stable_dt(params: ModelParams, grid: Grid2D, mode: Mode = Mode.ADIABATIC,
              safety: float = 0.05) -> float:
    """Conservative step ``safety * h / max(max|V_pos|, max|V_mom|)`` over the grid.

    Keeps the phase advance of every grid mode per step well below pi.  The
    split-operator scheme is unconditionally stable, so this is an upper
    bound for worst-case phase resolution, not a stability limit; accuracy on
    the support of the state is usually reached at much larger steps.
    """
    X, Y = grid.mesh(Space.POSITION)
    vpos = float(np.max(np.abs(0.5 * (X * X + Y * Y))))
    PX, PY = grid.mesh(Space.MOMENTUM)
    b = np.sqrt((params.vx * PX) ** 2 + (params.vy * PY) ** 2)
    kin = 0.5 * (PX * PX + PY * PY)
    if Mode(mode) is Mode.FULL:
        vmom = float(np.max(kin + b))
    else:
        vmom = float(np.max(np.abs(kin - b)))
    return safety * params.h / max(vpos, vmom)


class Propagator:
    """Precomputed Strang factors for one ``(params, grid, dt, mode)``.

    Parameters
    ----------
    trap_center : tuple
        Centre of the harmonic trap (the post-quench trap is centred).
    imaginary : bool
        Use ``dt -> -i dtau``; factors become real decays.
    """

    def __init__(self, params: ModelParams, grid: Grid2D, config: PropagatorConfig,
                 trap_center=(0.0, 0.0), imaginary: bool = False):
        if abs(grid.h - params.h) > 1e-12 * params.h:
            raise ConfigError(f"grid h={grid.h} differs from model h={params.h}")
        self.params, self.grid, self.config = params, grid, config
        self.imaginary = imaginary
        self.kernels = _kernels.backend
        h, dt = params.h, config.dt
        X, Y = grid.mesh(Space.POSITION)
        V = 0.5 * ((X - trap_center[0]) ** 2 + (Y - trap_center[1]) ** 2)
        PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
        kin = 0.5 * (PX * PX + PY * PY)
        bx, by = params.vx * PX, params.vy * PY
        b = np.hypot(bx, by)
        if imaginary:
            self.half_pos = np.exp(-0.5 * dt * V / h).astype(complex)
            self.full_pos = np.exp(-dt * V / h).astype(complex)
        else:
            self.half_pos = np.exp(-0.5j * dt * V / h)
            self.full_pos = np.exp(-1j * dt * V / h)
        if config.mode is Mode.ADIABATIC:
            vmom = kin - b
            self.mom = (np.exp(-dt * vmom / h) if imaginary else np.exp(-1j * dt * vmom / h)).astype(complex)
        else:
            a = b * dt / h
            safe = np.where(b > 0, b, 1.0)
            nx = np.where(b > 0, bx / safe, 0.0)
            ny = np.where(b > 0, by / safe, 0.0)
            if imaginary:
                # exp(-dtau (kin - |b|)/h) [cosh(a) e^{-a} I + sinh(a) e^{-a} b_hat.sigma]
                env = np.exp(-dt * (kin - b) / h)
                e2 = np.exp(-2.0 * a)
                c = 0.5 * (1.0 + e2) * env
                s = 0.5 * (1.0 - e2) * env
                self.m11 = c.astype(complex)
                self.m12 = s * (nx - 1j * ny)
                self.m21 = s * (nx + 1j * ny)
            else:
                ph = np.exp(-1j * dt * kin / h)
                cs, sn = np.cos(a), np.sin(a)
                self.m11 = ph * cs
                self.m12 = ph * (1j * sn) * (nx - 1j * ny)
                self.m21 = ph * (1j * sn) * (nx + 1j * ny)

    def _momentum_kick(self, arrays):
        k = self.kernels
        if self.config.mode is Mode.ADIABATIC:
            (a,) = arrays
            f = sfft.fft2(a, overwrite_x=True)
            k.phase_kick(f, self.mom)
            return [sfft.ifft2(f, overwrite_x=True)]
        up, down = arrays
        fu = sfft.fft2(up, overwrite_x=True)
        fd = sfft.fft2(down, overwrite_x=True)
        k.spinor_kick(fu, fd, self.m11, self.m12, self.m21)
        return [sfft.ifft2(fu, overwrite_x=True), sfft.ifft2(fd, overwrite_x=True)]

    def run(self, arrays, nsteps: int):
        """Apply ``nsteps`` fused Strang steps to position-space arrays."""
        if nsteps <= 0:
            return [np.array(a, dtype=complex, copy=True) for a in arrays]
        arrays = [np.array(a, dtype=complex, copy=True) for a in arrays]
        k = self.kernels
        for a in arrays:
            k.phase_kick(a, self.half_pos)
        for i in range(nsteps):
            arrays = self._momentum_kick(arrays)
            edge = self.half_pos if i == nsteps - 1 else self.full_pos
            for a in arrays:
                k.phase_kick(a, edge)
        return arrays

    def step(self, state: QuantumState, nsteps: int = 1) -> QuantumState:
        if state.mode is not self.config.mode:
            raise ConfigError(f"state is {state.mode.value}, propagator is {self.config.mode.value}")
        if state.field.space is not Space.POSITION:
            raise ConfigError("propagation expects a position-space state")
        arrays = self.run(state.arrays(), nsteps)
        return _with_arrays(state, arrays, state.t + nsteps * self.config.dt)


def _with_arrays(state: QuantumState, arrays, t: float) -> QuantumState:
    grid = state.grid
    if state.mode is Mode.FULL:
        fld = SpinorField.from_arrays(grid, arrays[0], arrays[1], Space.POSITION)
    else:
        fld = ScalarField(grid, arrays[0], Space.POSITION)
    return QuantumState(fld, t, state.params, dict(state.meta))


def step_full(state: QuantumState, config: PropagatorConfig, propagator: Propagator | None = None):
    """One Strang step of the spinor model (position space in and out)."""
    if config.mode is not Mode.FULL:
        raise ConfigError("step_full needs mode FULL")
    prop = propagator or Propagator(state.params, state.grid, config)
    return prop.step(state, 1)


def step_adiabatic(state: QuantumState, config: PropagatorConfig,
                   propagator: Propagator | None = None):
    """One Strang step of the adiabatic scalar model."""
    if config.mode is not Mode.ADIABATIC:
        raise ConfigError("step_adiabatic needs mode ADIABATIC")
    prop = propagator or Propagator(state.params, state.grid, config)
    return prop.step(state, 1)


def _readonly(state: QuantumState):
    for a in state.arrays():
        a.setflags(write=False)


def evolve(state: QuantumState, config: PropagatorConfig, t_f: float, observers=(),
           propagator: Propagator | None = None, norm_tol: float = NORM_TOL):
    """Propagate to ``t_f`` calling each observer every ``config.cadence`` steps.

    Observers are called as ``obs(snapshot)`` with a read-only
    :class:`QuantumState` at ``t = t0 + k*dt`` (``k`` a multiple of the
    cadence, starting with ``k = 0``).  The number of steps is
    ``round(t_f/dt)``; ``t_f`` must be a multiple of ``dt`` to 1e-9.

    Raises
    ------
    NumericalError
        If the norm drifts from its initial value by more than ``norm_tol``.
    """
    if t_f < 0:
        raise ConfigError("t_f must be non-negative")
    dt = config.dt
    nsteps = int(round(t_f / dt))
    if abs(nsteps * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ConfigError(f"t_f={t_f} is not a multiple of dt={dt}")
    prop = propagator or Propagator(state.params, state.grid, config)
    t0 = state.t
    n0 = state.norm()
    cur = state.copy()
    done = 0

    def notify(s):
        _readonly(s)
        try:
            for obs in observers:
                obs(s)
        finally:
            for a in s.arrays():
                a.setflags(write=True)

    notify(cur)
    k = config.cadence
    while done < nsteps:
        block = min(k, nsteps - done)
        arrays = prop.run(cur.arrays(), block)
        done += block
        cur = _with_arrays(cur, arrays, t0 + done * dt)
        drift = abs(cur.norm() - n0)
        if not math.isfinite(drift) or drift > norm_tol:
            raise NumericalError(
                f"norm drift {drift:.3e} at t={cur.t:.6g} exceeds {norm_tol:g}")
        if block == k:
            notify(cur)
    return cur


@dataclass
class PrepResult:
    state: QuantumState
    energy_shifted: float
    steps: int
    converged: bool
    rng_seed: int | None
    seed_angle: float | None


def _seed_momentum(params: ModelParams, which: Minimum, rng_seed):
    v = params.v_max
    angle = None
    if which is Minimum.RING_RANDOM_PHASE:
        if not params.isotropic:
            raise ConfigError("RING_RANDOM_PHASE needs isotropic coupling")
        angle = float(np.random.default_rng(rng_seed).uniform(0.0, 2.0 * math.pi))
        return (v * math.cos(angle), v * math.sin(angle)), angle
    sign = 1.0 if which is Minimum.RIGHT else -1.0
    if params.vy >= params.vx:
        return (0.0, sign * params.vy), angle
    return (sign * params.vx, 0.0), angle


def seed_state(params: ModelParams, grid: Grid2D, mode: Mode, p0, center) -> QuantumState:
    """Gaussian packet at position ``center`` and momentum ``p0``.

    Full model: each momentum component carries the lower-band helicity
    spinor, written as ``(1, exp(i phi))/sqrt(2)`` (smooth away from ``p = 0``).
    """
    h = params.h
    PX, PY = grid.mesh(Space.MOMENTUM)
    env = np.exp(-((PX - p0[0]) ** 2 + (PY - p0[1]) ** 2) / (2.0 * h))
    env = env * np.exp(-1j * (PX * center[0] + PY * center[1]) / h)
    mode = Mode(mode)
    if mode is Mode.ADIABATIC:
        fld = ScalarField(grid, env, Space.MOMENTUM)
    else:
        bx, by = params.vx * PX, params.vy * PY
        phi = np.where(np.hypot(bx, by) > 0, np.arctan2(by, bx), 0.0)
        s = 1.0 / math.sqrt(2.0)
        fld = SpinorField.from_arrays(grid, s * env, s * env * np.exp(1j * phi), Space.MOMENTUM)
    fld = transform(fld, Direction.TO_POSITION)
    nrm = math.sqrt(norm2(fld))
    if isinstance(fld, SpinorField):
        fld.up.values /= nrm
        fld.down.values /= nrm
    else:
        fld.values /= nrm
    return QuantumState(fld, 0.0, params)


def prepare_quasi_ground(params: ModelParams, mode: Mode, which=Minimum.RIGHT,
                         grid: Grid2D | None = None, dtau: float = 0.01,
                         energy_tol: float = 1e-10, max_steps: int = 20000,
                         tau_max: float | None = None, rng_seed: int | None = 0,
                         check_every: int = 10) -> PrepResult:
    """Imaginary-time relaxation in the trap shifted to ``(x_s, y_s)``.

    Convergence is declared when the energy estimate changes by less than
    ``energy_tol`` per step.  The energy estimate comes from the per-step
    norm decay, ``E = -h ln(N)/(2 dtau)``.  ``tau_max`` caps the imaginary
    time; a run stopped by the cap reports ``converged=False`` without
    raising.  This is the normal outcome for the isotropic ring, whose
    azimuthal zero mode does not relax.

    Raises
    ------
    ConvergenceError
        If ``max_steps`` is exhausted before convergence (and no ``tau_max``
        cap applies).
    """
    mode = Mode(mode)
    which = Minimum(which)
    if grid is None:
        raise ConfigError("prepare_quasi_ground needs an explicit grid")
    h = params.h
    p0, angle = _seed_momentum(params, which, rng_seed)
    if params.v_max == 0.0:
        p0 = (0.0, 0.0)
    center = (params.xs, params.ys)
    state = seed_state(params, grid, mode, p0, center)
    prop = Propagator(params, grid, PropagatorConfig(dtau, mode), trap_center=center,
                      imaginary=True)
    arrays = state.arrays()
    cell = grid.cell_area(Space.POSITION)
    e_prev = math.inf
    steps = 0
    converged = False
    cap = max_steps if tau_max is None else min(max_steps, int(round(tau_max / dtau)))
    while steps < cap:
        block = min(check_every, cap - steps)
        if block > 1:
            arrays = prop.run(arrays, block - 1)
            n = sum(float(np.vdot(a, a).real) for a in arrays) * cell
            s = 1.0 / math.sqrt(n)
            for a in arrays:
                a *= s
        arrays = prop.run(arrays, 1)
        n = sum(float(np.vdot(a, a).real) for a in arrays) * cell
        if not (n > 0 and math.isfinite(n)):
            raise NumericalError("imaginary-time norm under/overflow")
        s = 1.0 / math.sqrt(n)
        for a in arrays:
            a *= s
        steps += block
        e = -h * math.log(n) / (2.0 * dtau)
        if abs(e - e_prev) < energy_tol * check_every:
            converged = True
            break
        e_prev = e
    if not converged and tau_max is None:
        raise ConvergenceError(
            f"imaginary-time preparation did not converge in {max_steps} steps")
    out = _with_arrays(state, arrays, 0.0)
    out.meta.update({"prep_steps": steps, "prep_converged": converged, "rng_seed": rng_seed,
                     "seed_angle": angle, "which": which.value})
    return PrepResult(out, e, steps, converged, rng_seed, angle)

"""Measurements on quantum states: Bloch vector, moments, energy, slices.

The widths ``dx``, ``dpx`` are standard deviations, so the phase-space areas
``Dx = dx*dpx`` and ``Dy = dy*dpy`` have units of action and are bounded
below by ``h/2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
import scipy.fft as sfft
from scipy.signal import find_peaks

from .errors import ConfigError
from .grid import Space, SpinorField
from .model import ModelParams

__all__ = [
    "BlochVector",
    "MomentRecord",
    "bloch_vector",
    "bloch_approx",
    "moments",
    "energy",
    "angular_momentum",
    "density_slice",
    "position_slice",
    "count_peaks",
    "edge_mass",
    "MomentObserver",
    "write_moments_csv",
    "MOMENT_COLUMNS",
]


@dataclass(frozen=True)
class BlochVector:
    Rx: float
    Ry: float
    Rz: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.Rx**2 + self.Ry**2 + self.Rz**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.Rx, self.Ry, self.Rz])


@dataclass(frozen=True)
class MomentRecord:
    t: float
    mx: float
    my: float
    mpx: float
    mpy: float
    dx: float
    dy: float
    dpx: float
    dpy: float
    Dx: float
    Dy: float
    E: float
    Rx: float
    Ry: float
    Rz: float


MOMENT_COLUMNS = tuple(f.name for f in fields(MomentRecord))


def _momentum_arrays(state):
    """Momentum amplitudes in FFT order, continuum normalised (``sum |.|^2 dp^2 = N``)."""
    grid = state.grid
    scale = grid.dx**2 / (2.0 * math.pi * grid.h)
    return [sfft.fft2(a) * scale for a in state.arrays()]


def _momentum_density(state):
    return sum(np.abs(f) ** 2 for f in _momentum_arrays(state))


def _position_density(state):
    return sum(np.abs(a) ** 2 for a in state.arrays())


def bloch_vector(state) -> BlochVector:
    """Pseudo-spin expectation ``<sigma>`` of a normalised state.

    Full model: ``<sigma_x> + i <sigma_y> = 2 int conj(psi_up) psi_down``.  Adiabatic
    model: the lower band is aligned with ``B``, so ``R = int |phi|^2 B/|B|``
    and ``R_z = 0`` exactly.
    """
    grid = state.grid
    if isinstance(state.field, SpinorField):
        up, down = state.arrays()
        c = np.vdot(up, down) * grid.dx**2
        rz = (np.vdot(up, up).real - np.vdot(down, down).real) * grid.dx**2
        return BlochVector(float(2.0 * c.real), float(2.0 * c.imag), float(rz))
    p = state.params
    rho = _momentum_density(state)
    PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
    bx, by = p.vx * PX, p.vy * PY
    b = np.hypot(bx, by)
    # the direction is undefined at the Dirac point; it gets zero weight
    safe = np.where(b > 0, b, 1.0)
    w = grid.dp**2
    return BlochVector(float(np.sum(rho * bx / safe) * w), float(np.sum(rho * by / safe) * w), 0.0)


def bloch_approx(params: ModelParams, mean_p) -> BlochVector:
    """Localised-packet estimate ``B(p_mean)/|B(p_mean)|``."""
    bx, by = params.vx * mean_p[0], params.vy * mean_p[1]
    b = math.hypot(bx, by)
    if b == 0.0:
        raise ConfigError("Bloch estimate undefined at the Dirac point")
    return BlochVector(bx / b, by / b, 0.0)


def _mean_var(rho, X, Y, w):
    mx = float(np.sum(rho * X) * w)
    my = float(np.sum(rho * Y) * w)
    vx = float(np.sum(rho * (X - mx) ** 2) * w)
    vy = float(np.sum(rho * (Y - my) ** 2) * w)
    return mx, my, math.sqrt(max(vx, 0.0)), math.sqrt(max(vy, 0.0))


def _energy_parts(state, rho_x, phis):
    grid, p = state.grid, state.params
    X, Y = grid.mesh(Space.POSITION)
    PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
    e_pos = float(np.sum(rho_x * 0.5 * (X * X + Y * Y))) * grid.dx**2
    kin = 0.5 * (PX * PX + PY * PY)
    bx, by = p.vx * PX, p.vy * PY
    w = grid.dp**2
    if len(phis) == 1:
        e_mom = float(np.sum(np.abs(phis[0]) ** 2 * (kin - np.hypot(bx, by)))) * w
    else:
        fu, fd = phis
        e_kin = float(np.sum((np.abs(fu) ** 2 + np.abs(fd) ** 2) * kin)) * w
        # <W> with W = -(b . sigma)
        e_so = -2.0 * float(np.sum(np.conj(fu) * (bx - 1j * by) * fd).real) * w
        e_mom = e_kin + e_so
    return e_pos + e_mom


def energy(state) -> float:
    """``<H>`` of the model the state belongs to, evaluated spectrally."""
    return _energy_parts(state, _position_density(state), _momentum_arrays(state))


def moments(state) -> MomentRecord:
    """First and second moments in both representations, energy and Bloch vector."""
    grid = state.grid
    rho_x = _position_density(state)
    phis = _momentum_arrays(state)
    rho_p = sum(np.abs(f) ** 2 for f in phis)
    X, Y = grid.mesh(Space.POSITION)
    PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
    mx, my, dx, dy = _mean_var(rho_x, X, Y, grid.dx**2)
    mpx, mpy, dpx, dpy = _mean_var(rho_p, PX, PY, grid.dp**2)
    E = _energy_parts(state, rho_x, phis)
    R = bloch_vector(state)
    return MomentRecord(float(state.t), mx, my, mpx, mpy, dx, dy, dpx, dpy,
                        dx * dpx, dy * dpy, E, R.Rx, R.Ry, R.Rz)


def angular_momentum(state) -> float:
    """``<J_z> = <x p_y - y p_x> + (h/2) <sigma_z>`` (spin term only for spinors)."""
    grid = state.grid
    X, Y = grid.mesh(Space.POSITION)
    PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
    total = 0.0
    for a in state.arrays():
        f = sfft.fft2(a)
        pya = sfft.ifft2(PY * f)
        pxa = sfft.ifft2(PX * f)
        total += float(np.vdot(a, X * pya - Y * pxa).real) * grid.dx**2
    if isinstance(state.field, SpinorField):
        total += 0.5 * grid.h * bloch_vector(state).Rz
    return total


def density_slice(state) -> np.ndarray:
    """``|psi(x, y=0)|`` along the grid row through ``y = 0``."""
    if state.field.space is not Space.POSITION:
        raise ConfigError("density_slice needs a position-space state")
    return position_slice(_position_density(state), state.grid)


def position_slice(rho, grid) -> np.ndarray:
    """``sqrt(rho(x, y=0))`` from a position density array."""
    iy = int(np.argmin(np.abs(grid.x)))
    return np.sqrt(np.asarray(rho)[:, iy])


def count_peaks(values, prominence: float = 0.05) -> int:
    """Number of maxima whose prominence exceeds ``prominence * max(values)``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or not np.any(values > 0):
        return 0
    peaks, _ = find_peaks(values, prominence=prominence * float(values.max()))
    return int(len(peaks))


def edge_mass(state, band: float = 0.1) -> dict:
    """Mass in the outer ``band`` fraction of the box, in both representations.

    A growing value means the state is reaching the periodic boundary and
    the grid should be enlarged.
    """
    grid = state.grid
    X, Y = grid.mesh(Space.POSITION)
    cut = (1.0 - band) * grid.extent_x
    rho_x = _position_density(state)
    out_x = float(np.sum(rho_x[(np.abs(X) > cut) | (np.abs(Y) > cut)])) * grid.dx**2
    PX, PY = grid.mesh(Space.MOMENTUM, fft_order=True)
    cutp = (1.0 - band) * grid.extent_p
    rho_p = _momentum_density(state)
    out_p = float(np.sum(rho_p[(np.abs(PX) > cutp) | (np.abs(PY) > cutp)])) * grid.dp**2
    return {"position": out_x, "momentum": out_p}


class MomentObserver:
    """Collects a :class:`MomentRecord` per snapshot; optionally streams CSV."""

    def __init__(self, path=None):
        self.records: list[MomentRecord] = []
        self._fh = None
        self._writer = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(MOMENT_COLUMNS)

    def __call__(self, state):
        rec = moments(state)
        self.records.append(rec)
        if self._writer is not None:
            self._writer.writerow(_format_row(rec))
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _format_row(rec: MomentRecord):
    return [f"{v:.12e}" for v in astuple(rec)]


def write_moments_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENT_COLUMNS)
        for rec in records:
            w.writerow(_format_row(rec))

"""Square spectral grid, scalar/spinor fields and the h-scaled Fourier transform.

Positions are ``x_j = -extent_x + j*dx`` with ``dx = 2*extent_x/n``.  Momenta are
``p = h*k`` with ``k`` the discrete wavenumbers of the periodic box, stored in
ascending (centred) order.  The transform is the unitary continuum-normalised
DFT

    phi(p) = 1/(2 pi h) * sum_j psi(x_j) exp(-i p.x_j/h) dx^2

so that ``[x, p] = i h`` on the grid and both representations carry the same
``norm2``.  Fields are indexed ``[ix, iy]`` (y fastest).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, SpaceMismatchError

__all__ = [
    "Space",
    "Direction",
    "Grid2D",
    "ScalarField",
    "SpinorField",
    "make_grid",
    "transform",
    "norm2",
    "grid_for_energy",
    "write_density",
    "read_density",
]


class Space(str, enum.Enum):
    POSITION = "pos"
    MOMENTUM = "mom"


class Direction(str, enum.Enum):
    TO_MOMENTUM = "to_momentum"
    TO_POSITION = "to_position"


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    """Immutable square grid shared by position and momentum representations."""

    n: int
    extent_x: float
    h: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise ConfigError(f"n must be a power of two >= 8, got {self.n!r}")
        if not (self.extent_x > 0 and math.isfinite(self.extent_x)):
            raise ConfigError(f"extent_x must be positive, got {self.extent_x!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError(f"h must be positive, got {self.h!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "extent_x", float(self.extent_x))
        object.__setattr__(self, "h", float(self.h))

    @property
    def dx(self) -> float:
        return 2.0 * self.extent_x / self.n

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / (self.n * self.dx)

    @property
    def dp(self) -> float:
        return self.h * self.dk

    @property
    def extent_p(self) -> float:
        """Largest momentum magnitude on the axis, ``h*pi/dx``."""
        return self.h * math.pi / self.dx

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.extent_x + self.dx * np.arange(self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def k(self) -> np.ndarray:
        k = self.dk * np.arange(-self.n // 2, self.n // 2)
        k.setflags(write=False)
        return k

    @cached_property
    def p(self) -> np.ndarray:
        p = self.h * self.k
        p.setflags(write=False)
        return p

    @cached_property
    def p_fft(self) -> np.ndarray:
        """Momentum axis in FFT (unshifted) order."""
        p = self.h * 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)
        p.setflags(write=False)
        return p

    def mesh(self, space: Space = Space.POSITION, fft_order: bool = False):
        """Return ``(X, Y)`` coordinate arrays of shape ``(n, n)``."""
        if Space(space) is Space.POSITION:
            axis = self.x
        else:
            axis = self.p_fft if fft_order else self.p
        return np.meshgrid(axis, axis, indexing="ij")

    def cell_area(self, space: Space) -> float:
        return self.dx**2 if Space(space) is Space.POSITION else self.dp**2

    @cached_property
    def _shift_phase(self) -> np.ndarray:
        # exp(-i k x_0) in FFT order, x_0 the first grid point
        k_fft = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)
        ph = np.exp(-1j * k_fft * self.x[0])
        ph.setflags(write=False)
        return ph

    def header(self, space: Space) -> str:
        return f"soqdyn-grid n={self.n} extent={self.extent_x!r} h={self.h!r} space={Space(space).value}"


def make_grid(n: int, extent_x: float, h: float) -> Grid2D:
    """Build a :class:`Grid2D`; rejects non-power-of-two ``n`` and non-positive extents."""
    return Grid2D(n, extent_x, h)


@dataclass
class ScalarField:
    grid: Grid2D
    values: np.ndarray
    space: Space = Space.POSITION

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        self.space = Space(self.space)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ConfigError(
                f"field shape {self.values.shape} does not match grid n={self.grid.n}"
            )

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.space)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass
class SpinorField:
    up: ScalarField
    down: ScalarField

    def __post_init__(self):
        if self.up.grid != self.down.grid:
            raise ConfigError("spinor components live on different grids")
        if self.up.space is not self.down.space:
            raise SpaceMismatchError("spinor components are in different representations")

    @classmethod
    def from_arrays(cls, grid: Grid2D, up, down, space: Space = Space.POSITION) -> "SpinorField":
        return cls(ScalarField(grid, up, space), ScalarField(grid, down, space))

    @property
    def grid(self) -> Grid2D:
        return self.up.grid

    @property
    def space(self) -> Space:
        return self.up.space

    def copy(self) -> "SpinorField":
        return SpinorField(self.up.copy(), self.down.copy())

    def density(self) -> np.ndarray:
        return self.up.density() + self.down.density()


def _transform_array(grid: Grid2D, values: np.ndarray, direction: Direction) -> np.ndarray:
    ph = grid._shift_phase
    if direction is Direction.TO_MOMENTUM:
        out = sfft.fft2(values)
        out *= ph[:, None]
        out *= ph[None, :]
        out = np.fft.fftshift(out)
        out *= grid.dx**2 / (2.0 * math.pi * grid.h)
        return out
    tmp = np.fft.ifftshift(values)
    tmp = tmp * np.conj(ph)[:, None]
    tmp *= np.conj(ph)[None, :]
    out = sfft.ifft2(tmp)
    out *= 2.0 * math.pi * grid.h / grid.dx**2
    return out


def transform(field, direction):
    """Unitary h-scaled Fourier transform of a scalar or spinor field.

    Raises
    ------
    SpaceMismatchError
        If the field is not in the source representation of ``direction``.
    """
    direction = Direction(direction)
    source = Space.POSITION if direction is Direction.TO_MOMENTUM else Space.MOMENTUM
    target = Space.MOMENTUM if source is Space.POSITION else Space.POSITION
    if isinstance(field, SpinorField):
        return SpinorField(transform(field.up, direction), transform(field.down, direction))
    if field.space is not source:
        raise SpaceMismatchError(
            f"cannot apply {direction.value} to a field in {field.space.value} space"
        )
    return ScalarField(field.grid, _transform_array(field.grid, field.values, direction), target)


def norm2(field) -> float:
    """``sum |value|^2`` times the cell area of the field's representation."""
    if isinstance(field, SpinorField):
        return norm2(field.up) + norm2(field.down)
    vals = field.values
    return float(np.vdot(vals, vals).real) * field.grid.cell_area(field.space)


def _next_pow2(x: float) -> int:
    return 1 << max(3, math.ceil(math.log2(max(x, 1.0))))


def grid_for_energy(v_max: float, e_max: float, h: float, margin: float = 1.5,
                    tail: float = 3.0, n_max: int | None = None,
                    balance: bool = False) -> Grid2D:
    """Smallest power-of-two grid whose boxes contain the accessible shell.

    The momentum half-width is at least ``margin*(v + sqrt(max(0, 2E + v^2)))``
    and the position half-width ``margin*sqrt(max(0, 2E + v^2))``; both get an
    extra ``tail*sqrt(h)`` for the quantum tails of the packet.  Rounding
    ``n`` up to a power of two leaves slack; with ``balance`` it is shared
    between both boxes (same relative enlargement) instead of going entirely
    to the momentum box.
    """
    if h <= 0:
        raise ConfigError("h must be positive")
    r = math.sqrt(max(0.0, 2.0 * e_max + v_max**2))
    extent_x = margin * r + tail * math.sqrt(h)
    extent_p = margin * (v_max + r) + tail * math.sqrt(h)
    n_req = 2.0 * extent_x * extent_p / (math.pi * h)
    n = _next_pow2(n_req)
    if n_max is not None and n > n_max:
        raise ConfigError(
            f"accessible shell needs n={n} points per axis, above n_max={n_max}"
        )
    if balance:
        extent_x *= math.sqrt(n / n_req)
    return Grid2D(n, extent_x, h)


def write_density(path, grid: Grid2D, density: np.ndarray, space: Space) -> Path:
    """Write a density in the shared ``soqdyn-grid`` dump format."""
    density = np.asarray(density, dtype="<f8")
    if density.shape != (grid.n, grid.n):
        raise ConfigError("density shape does not match grid")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write((grid.header(space) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(density).tobytes(order="C"))
    return path


def read_density(path):
    """Read a dump back; returns ``(grid, density, space)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = header.split()
    if not parts or parts[0] != "soqdyn-grid":
        raise ConfigError(f"{path}: not a soqdyn-grid dump")
    kv = dict(item.split("=", 1) for item in parts[1:])
    grid = Grid2D(int(kv["n"]), float(kv["extent"]), float(kv["h"]))
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != grid.n**2:
        raise ConfigError(f"{path}: expected {grid.n**2} values, found {data.size}")
    return grid, data.reshape(grid.n, grid.n).copy(), Space(kv["space"])

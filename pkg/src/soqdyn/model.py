"""Physics of the trapped spin-orbit coupled gas in oscillator units.

All functions take a :class:`ModelParams` and momentum components that may be
scalars or numpy arrays.  The spin-orbit field is ``B(p) = (v_x p_x, v_y p_y)``.

Sign convention
---------------
The helicity spinor of band ``mu`` is ``(exp(-i phi/2), -mu exp(+i phi/2))/sqrt(2)``
with ``phi = atan2(v_y p_y, v_x p_x)``, so that ``<sigma_x> + i <sigma_y> =
-mu exp(i phi)``: the lower band (``mu = -1``) is spin-aligned with ``B``.  For
that spinor to carry energy ``mu |B|`` the spin kernel of the Hamiltonian must
be ``W(p) = -(v_x p_x sigma_x + v_y p_y sigma_y)``.  The overall sign of the SO
term is a gauge choice (conjugation by ``sigma_z``) and does not change spectra,
densities or ``J_z``; it only fixes the sign of the reported Bloch vector.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "ModelParams",
    "FixedPointKind",
    "FixedPoint",
    "AccessibleRegion",
    "field_magnitude",
    "dispersion",
    "adiabatic_potential",
    "helicity_angle",
    "spinor_eigenstate",
    "spin_kernel",
    "nonadiabatic_scale",
    "classical_fixed_points",
    "accessible_region",
]


@dataclass(frozen=True)
class ModelParams:
    """SO velocities, pre-quench trap shift and dimensionless Planck constant."""

    vx: float = 0.0
    vy: float = 0.0
    xs: float = 0.0
    ys: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        for name in ("vx", "vy", "xs", "ys", "h"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ConfigError(f"{name} must be finite, got {val!r}")
            object.__setattr__(self, name, float(val))
        if self.vx < 0 or self.vy < 0:
            raise ConfigError("SO velocities must be non-negative")
        if self.h <= 0:
            raise ConfigError("h must be positive")

    @property
    def isotropic(self) -> bool:
        return self.vx == self.vy

    @property
    def v_max(self) -> float:
        return max(self.vx, self.vy)

    @property
    def minimum_energy(self) -> float:
        """Global minimum of the lower adiabatic potential, ``-v_max^2/2``."""
        return -0.5 * self.v_max**2

    def replace(self, **kw) -> "ModelParams":
        data = {k: getattr(self, k) for k in ("vx", "vy", "xs", "ys", "h")}
        data.update(kw)
        return ModelParams(**data)


def field_magnitude(params: ModelParams, px, py):
    """``|B(p)| = sqrt(v_x^2 p_x^2 + v_y^2 p_y^2)``."""
    return np.sqrt((params.vx * px) ** 2 + (params.vy * py) ** 2)


def _check_mu(mu):
    if mu not in (1, -1):
        raise ConfigError(f"band index mu must be +1 or -1, got {mu!r}")


def dispersion(params: ModelParams, mu: int, px, py):
    """Free SO dispersion ``E_mu(p) = p^2/2 + mu |B(p)|``."""
    _check_mu(mu)
    return 0.5 * (px * px + py * py) + mu * field_magnitude(params, px, py)


def adiabatic_potential(params: ModelParams, mu: int, px, py):
    """Momentum-space potential of the Born-Oppenheimer Hamiltonian.

    Numerically identical to :func:`dispersion`; kept separate because it is
    used as a potential over momentum space by the propagators and the
    classical flow.
    """
    return dispersion(params, mu, px, py)


def helicity_angle(params: ModelParams, px, py):
    return np.arctan2(params.vy * py, params.vx * px)


def spinor_eigenstate(params: ModelParams, mu: int, px: float, py: float) -> np.ndarray:
    """Helicity spinor ``(up, down)`` of band ``mu`` at momentum ``p``."""
    _check_mu(mu)
    if float(field_magnitude(params, px, py)) == 0.0:
        raise ConfigError("helicity spinor is undefined at the Dirac point B(p)=0")
    phi = math.atan2(params.vy * py, params.vx * px)
    return np.array([np.exp(-0.5j * phi), -mu * np.exp(0.5j * phi)]) / math.sqrt(2.0)


def spin_kernel(params: ModelParams, px: float, py: float) -> np.ndarray:
    """2x2 SO kernel ``W(p)`` of the full Hamiltonian (see module docstring)."""
    bx, by = params.vx * px, params.vy * py
    return -np.array([[0.0, bx - 1j * by], [bx + 1j * by, 0.0]])


def nonadiabatic_scale(params: ModelParams, px, py):
    """Diagnostic size of the neglected Born-Huang scalar potential.

    ``(v_x v_y)^2 (p_x^2 + p_y^2) / (v_x^2 p_x^2 + v_y^2 p_y^2)^2`` with unit
    prefactor.  Never enters a Hamiltonian.
    """
    b2 = (params.vx * px) ** 2 + (params.vy * py) ** 2
    if np.any(np.asarray(b2) == 0):
        raise ConfigError("non-adiabatic scale diverges at the Dirac point")
    return (params.vx * params.vy) ** 2 * (px * px + py * py) / b2**2


class FixedPointKind(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class FixedPoint:
    """Fixed point ``(x, y) = (0, 0)``, ``p = p`` of the classical flow.

    For isotropic coupling the degenerate stable seam ``|p| = v`` is reported
    once with ``ring_radius`` set and ``p`` a representative point on it.
    """

    p: tuple
    kind: FixedPointKind
    ring_radius: float | None = None


def classical_fixed_points(params: ModelParams) -> list[FixedPoint]:
    vx, vy = params.vx, params.vy
    U, S = FixedPointKind.UNSTABLE, FixedPointKind.STABLE
    if vx == 0 and vy == 0:
        return [FixedPoint((0.0, 0.0), S)]
    if vx == vy:
        return [FixedPoint((0.0, 0.0), U), FixedPoint((0.0, vy), S, ring_radius=vy)]
    if vy > vx:
        pts = [FixedPoint((0.0, 0.0), U)]
        if vx > 0:
            pts += [FixedPoint((vx, 0.0), U), FixedPoint((-vx, 0.0), U)]
        pts += [FixedPoint((0.0, vy), S), FixedPoint((0.0, -vy), S)]
        return pts
    # v_x > v_y: roles of the axes swap
    pts = [FixedPoint((0.0, 0.0), U)]
    if vy > 0:
        pts += [FixedPoint((0.0, vy), U), FixedPoint((0.0, -vy), U)]
    pts += [FixedPoint((vx, 0.0), S), FixedPoint((-vx, 0.0), S)]
    return pts


@dataclass(frozen=True)
class AccessibleRegion:
    """Classically allowed sets at energies up to ``e_max``.

    Position: the disc ``x^2 + y^2 <= r2_max``.  Momentum: along each ray of
    angle ``theta`` the set ``p^2 - 2|B(p)| <= 2 E_max`` is the radial interval
    ``[c - sqrt(c^2 + 2E), c + sqrt(c^2 + 2E)]`` (inner edge clipped at 0) with
    ``c(theta) = sqrt(v_x^2 cos^2 + v_y^2 sin^2)``.
    """

    params: ModelParams
    e_max: float
    r2_max: float
    px_max: float
    py_max: float
    annulus: tuple | None = field(default=None)

    def radial_bounds(self, theta):
        c = np.sqrt((self.params.vx * np.cos(theta)) ** 2 + (self.params.vy * np.sin(theta)) ** 2)
        disc = c * c + 2.0 * self.e_max
        root = np.sqrt(np.maximum(disc, 0.0))
        inner = np.where(disc >= 0, np.maximum(c - root, 0.0), np.inf)
        outer = np.where(disc >= 0, c + root, -np.inf)
        return inner, outer

    def contains_momentum(self, px, py, pad: float = 0.0):
        r = np.hypot(px, py)
        inner, outer = self.radial_bounds(np.arctan2(py, px))
        return (r >= inner - pad) & (r <= outer + pad)

    def contains_position(self, x, y, pad: float = 0.0):
        return np.hypot(x, y) <= math.sqrt(self.r2_max) + pad


def accessible_region(params: ModelParams, e_max: float) -> AccessibleRegion:
    if e_max < params.minimum_energy:
        raise ConfigError(
            f"E_max={e_max} lies below the potential minimum {params.minimum_energy}"
        )
    r2 = 2.0 * e_max + params.v_max**2
    probe = AccessibleRegion(params, e_max, r2, 0.0, 0.0)
    theta = np.linspace(-math.pi, math.pi, 20001)
    _, outer = probe.radial_bounds(theta)
    ok = np.isfinite(outer)
    px_max = float(np.max(np.abs(outer[ok] * np.cos(theta[ok]))))
    py_max = float(np.max(np.abs(outer[ok] * np.sin(theta[ok]))))
    annulus = None
    if params.isotropic:
        v = params.vx
        root = math.sqrt(max(v * v + 2.0 * e_max, 0.0))
        annulus = (max(v - root, 0.0), v + root)
    return AccessibleRegion(params, float(e_max), r2, px_max, py_max, annulus)

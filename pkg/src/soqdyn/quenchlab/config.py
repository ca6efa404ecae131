"""Experiment configuration with ASCII ``key = value`` round trip."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigError
from ..manifest import read_kv, write_kv
from ..model import ModelParams
from ..qprop import Minimum, Mode

__all__ = ["Kind", "ExperimentConfig", "load_config", "save_config", "auto_dt"]


class Kind(str, enum.Enum):
    QUENCH = "quench"
    EHRENFEST = "ehrenfest"
    POINCARE = "poincare"
    LYAPUNOV = "lyapunov"
    ISLAND = "island"
    TWA = "twa"


# default accuracy-based steps; see auto_dt
DT_ADIABATIC = 0.02
DT_FULL = 0.0025


def auto_dt(mode: Mode, h: float = 1.0) -> float:
    """Default time step for a model.

    Split-operator is unconditionally stable; these steps were fixed by
    dt-halving convergence studies on the chaotic quench configurations.
    """
    return DT_FULL if Mode(mode) is Mode.FULL else DT_ADIABATIC


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one experiment.  ``0`` means "choose automatically" for
    ``n``, ``extent`` and ``dt``; ``nan`` energy means "not given"."""

    kind: Kind = Kind.QUENCH
    vx: float = 0.0
    vy: float = 0.0
    xs: float = 0.0
    ys: float = 0.0
    h: float = 1.0
    mode: Mode = Mode.ADIABATIC
    which: Minimum = Minimum.RIGHT
    n: int = 0
    extent: float = 0.0
    margin: float = 1.0
    tail: float = 3.0
    t_f: float = 400.0
    dt: float = 0.0
    sample_dt: float = 0.5
    prep_dtau: float = 0.02
    prep_tau_max: float = 0.0
    twa_n: int = 0
    tol: float = 1e-10
    rng_seed: int = 0
    out: str = "out"
    h_list: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    energy: float = math.nan
    n_seeds: int = 18
    plane: str = "py"
    section_tf: float = 200000.0
    max_crossings: int = 2000
    lyap_T: float = 5000.0
    renorm_dt: float = 0.5
    lam_chaos: float = 0.03
    area_fraction: float = 0.25
    growth_tol: float = 0.1
    dump_densities: bool = True
    workers: int = 1

    def __post_init__(self):
        conv = {f.name: _COERCE.get(f.name, _coerce_for(f.default)) for f in fields(self)}
        for name, fn in conv.items():
            try:
                object.__setattr__(self, name, fn(getattr(self, name)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {name}: {getattr(self, name)!r}") from exc
        if self.t_f < 0 or self.sample_dt <= 0:
            raise ConfigError("t_f must be >= 0 and sample_dt > 0")
        if self.dt < 0 or self.n < 0 or self.extent < 0:
            raise ConfigError("dt, n and extent must be >= 0 (0 selects automatically)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.plane not in ("y", "py"):
            raise ConfigError("plane must be 'y' or 'py'")
        self.params  # validates physics parameters

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.vx, self.vy, self.xs, self.ys, self.h)

    @property
    def time_step(self) -> float:
        return self.dt if self.dt > 0 else auto_dt(self.mode, self.h)

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, enum.Enum):
                d[k] = v.value
        return d


def _as_bool(v):
    if isinstance(v, str):
        low = v.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(v)
    return bool(v)


def _as_float_tuple(v):
    if isinstance(v, str):
        parts = [p for p in v.replace(" ", "").split(",") if p]
        return tuple(float(p) for p in parts)
    return tuple(float(x) for x in v)


def _as_float(v):
    if isinstance(v, str) and v.strip() == "":
        return math.nan
    return float(v)


def _as_int(v):
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(v)
    return int(v)


def _coerce_for(default):
    if isinstance(default, bool):
        return _as_bool
    if isinstance(default, int):
        return _as_int
    if isinstance(default, float):
        return _as_float
    return str


_COERCE = {
    "kind": Kind,
    "mode": Mode,
    "which": Minimum,
    "h_list": _as_float_tuple,
}


def save_config(path, config: ExperimentConfig, extra: dict | None = None):
    data = config.to_dict()
    if extra:
        data.update(extra)
    return write_kv(path, data)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a config file; unknown keys are an error, ``meta.*`` keys are ignored."""
    raw = read_kv(path)
    known = {f.name for f in fields(ExperimentConfig)}
    data = {}
    for k, v in raw.items():
        if k.startswith("meta.") or k.startswith("result."):
            continue
        if k not in known:
            raise ConfigError(f"{path}: unknown config key {k!r}")
        data[k] = v
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)

"""ASCII ``key = value`` manifests and configs."""
from __future__ import annotations

import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

__all__ = ["write_kv", "read_kv", "build_id", "format_value"]


def build_id() -> str:
    """``<version>+<git describe>`` when run from a checkout, else the version."""
    here = Path(__file__).resolve().parent
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def format_value(v) -> str:
    """Render a value the way :func:`write_kv` stores it."""
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    if v is None:
        return ""
    return str(getattr(v, "value", v))


def write_kv(path, data: dict, header: str | None = None) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for k in sorted(data):
            fh.write(f"{k} = {format_value(data[k])}\n")
    return path


def read_kv(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise ConfigError(f"{path}:{lineno}: empty key")
            out[k] = v
    return out

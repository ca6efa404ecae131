"""``quenchlab`` command line.

Values are layered: subcommand presets, then ``--config``, then flags.
Exit status is 0 on success, 2 on configuration errors (including bad
flags) and 3 on numerical failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from ..errors import ConfigError, NumericalError
from ..manifest import read_kv
from . import runs
from .config import ExperimentConfig, Kind, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# aliases for the most used flags
_ALIASES = {"t_f": ["--tf"], "rng_seed": ["--seed"], "lyap_T": ["--lyap-t"]}

PRESETS = {
    Kind.EHRENFEST: dict(vx=20.0, vy=30.0, xs=19.0, ys=19.0, t_f=120.0),
    Kind.ISLAND: dict(vx=20.0, vy=30.0, xs=20.0, ys=0.0),
    Kind.POINCARE: dict(vx=30.0, vy=30.0, energy=-192.0),
    Kind.LYAPUNOV: dict(vx=20.0, vy=30.0, energy=-88.0),
}


def _add_config_flags(p: argparse.ArgumentParser):
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "kind":
            continue
        names = ["--" + f.name.replace("_", "-")] + _ALIASES.get(f.name, [])
        if isinstance(f.default, bool):
            p.add_argument(*names, dest=f.name, default=None, metavar="BOOL",
                           help=f"(default {f.default})")
        else:
            p.add_argument(*names, dest=f.name, default=None,
                           help=f"(default {f.default!r})")
    p.add_argument("--config", default=None, help="ASCII key = value config file")
    p.add_argument("--reuse", action="store_true",
                   help="load complete bundles with identical config instead of recomputing")
    p.add_argument("-v", "--verbose", action="store_true")


_HELP = {
    Kind.QUENCH: "prepare, quench and evolve one wave packet",
    Kind.EHRENFEST: "quench for several h and fit the Lyapunov shift",
    Kind.POINCARE: "classical Poincare sections on an energy shell",
    Kind.LYAPUNOV: "classical maximum Lyapunov exponents on an energy shell",
    Kind.ISLAND: "quench plus REGULAR/THERMALIZED verdict",
    Kind.TWA: "truncated Wigner ensemble from the prepared state",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quenchlab",
                                     description="Quench experiments for trapped spin-orbit-coupled gases.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in Kind:
        _add_config_flags(sub.add_parser(kind.value, help=_HELP[kind]))
    return parser


def config_from_args(args) -> ExperimentConfig:
    kind = Kind(args.command)
    flags = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)
             if f.name != "kind" and getattr(args, f.name) is not None}
    preset = dict(PRESETS.get(kind, {}))
    if args.config:
        present = set(read_kv(args.config))
        overrides = {k: v for k, v in preset.items() if k not in present}
        overrides.update(flags)
        return load_config(args.config, **overrides).with_(kind=kind)
    preset.update(flags)
    return ExperimentConfig(kind=kind, **preset)


def _summary(kind: Kind, res) -> str:
    if kind is Kind.ISLAND:
        return f"verdict {res.verdict} (area ratio {res.area_ratio:.3g}, growth {res.growth:.3g})"
    if kind is Kind.EHRENFEST:
        flag = " [at search boundary]" if res.at_boundary else ""
        return (f"lambda {res.lam:.4g}{flag}, spread {res.spread_unshifted:.4g} -> "
                f"{res.spread_shifted:.4g}")
    if kind is Kind.LYAPUNOV:
        return f"median chaotic lambda {res['median_chaotic']:.4g} ({int(res['chaotic'].sum())} seeds)"
    if kind is Kind.POINCARE:
        return f"{sum(v[0] for v in res['verdicts'])}/{len(res['verdicts'])} closed curves"
    if kind is Kind.TWA:
        return f"{res['failed']} failed trajectories"
    return f"energy {res.records[0].E:.6g}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        config = config_from_args(args)
        kind = config.kind
        if kind is Kind.QUENCH:
            res = runs.run_quench(config, reuse=args.reuse)
        elif kind is Kind.ISLAND:
            res = runs.run_island(config, reuse=args.reuse)
        elif kind is Kind.EHRENFEST:
            res = runs.run_ehrenfest(config, reuse=args.reuse)
        elif kind is Kind.POINCARE:
            res = runs.run_poincare(config)
        elif kind is Kind.LYAPUNOV:
            res = runs.run_lyapunov(config)
        else:
            res = runs.run_twa(config)
    except ConfigError as exc:
        print(f"quenchlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"quenchlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{kind.value}: {_summary(kind, res)}; outputs in {config.out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

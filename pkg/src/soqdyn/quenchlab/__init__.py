"""Experiment harness: configs, run drivers and the ``quenchlab`` CLI."""
from .config import ExperimentConfig, Kind, auto_dt, load_config, save_config
from .runs import (EhrenfestResult, IslandResult, QuenchResult, ehrenfest_time, fit_lambda,
                   island_verdict, load_quench, run_ehrenfest, run_island, run_lyapunov,
                   run_poincare, run_quench, run_twa, spread_metric)

__all__ = [
    "ExperimentConfig", "Kind", "auto_dt", "load_config", "save_config",
    "EhrenfestResult", "IslandResult", "QuenchResult", "ehrenfest_time", "fit_lambda",
    "island_verdict", "load_quench", "run_ehrenfest", "run_island", "run_lyapunov",
    "run_poincare", "run_quench", "run_twa", "spread_metric",
]

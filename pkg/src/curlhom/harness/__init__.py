"""Configuration, scenario library, convergence sweeps, reports and the command line."""

from .config import ConfigError, ScenarioConfig, format_config, load_config, parse_config, parse_epsilons
from .report import CSV_COLUMNS, export_report, load_report, to_csv, to_json
from .scenarios import SHIPPED, build_models, default_source, resolve_config, shipped_config
from .sweep import ConvergenceReport, RateFit, closure_study, fit_rate, run_scenario

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "format_config",
    "load_config",
    "parse_config",
    "parse_epsilons",
    "CSV_COLUMNS",
    "export_report",
    "load_report",
    "to_csv",
    "to_json",
    "SHIPPED",
    "build_models",
    "default_source",
    "resolve_config",
    "shipped_config",
    "ConvergenceReport",
    "RateFit",
    "closure_study",
    "fit_rate",
    "run_scenario",
]

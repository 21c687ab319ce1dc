"""Shipped scenarios and the objects a configuration describes.

The coefficient families and sources here are constructed for this package
(no canonical test media exist for the problem); reports label them so.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..cell import CellSolveConfig
from ..coefficients import CoefficientModel, builtin
from ..fields import CellGrid, FieldPair, MacroGrid
from .config import ScenarioConfig, load_config, parse_config

__all__ = [
    "SHIPPED",
    "shipped_config",
    "resolve_config",
    "build_models",
    "macro_grid",
    "closure_grid",
    "fine_grid",
    "cell_grid",
    "cell_config",
    "default_source",
    "SCENARIO_LABEL",
]

SHIPPED = ("identity", "laminate", "inclusion")
SCENARIO_LABEL = "package-constructed scenario (no reference media exist for this problem)"


def shipped_config(name: str) -> ScenarioConfig:
    if name not in SHIPPED:
        raise KeyError(f"no shipped scenario {name!r}; choose from {SHIPPED}")
    text = resources.files("curlhom.harness").joinpath("configs", f"{name}.ini").read_text()
    return parse_config(text)


def resolve_config(ref: str) -> ScenarioConfig:
    """A shipped scenario name or a path to a config file."""
    return shipped_config(ref) if ref in SHIPPED else load_config(ref)


def build_models(cfg: ScenarioConfig) -> tuple[CoefficientModel, CoefficientModel]:
    models = []
    for which in ("alpha", "mu"):
        family, params = cfg.model_params(which)
        models.append(builtin(family, cfg.support_radius, **params))
    return models[0], models[1]


def macro_grid(cfg: ScenarioConfig) -> MacroGrid:
    return MacroGrid(cfg.macro, cfg.side, cfg.support_radius, cfg.macro_stencil)


def closure_grid(cfg: ScenarioConfig) -> MacroGrid:
    return MacroGrid(cfg.closure_macro, cfg.side, cfg.support_radius, cfg.closure_stencil)


def fine_grid(cfg: ScenarioConfig, epsilon) -> MacroGrid:
    return MacroGrid(cfg.fine_resolution(epsilon), cfg.side, cfg.support_radius)


def cell_grid(cfg: ScenarioConfig) -> CellGrid:
    return CellGrid(cfg.cell)


def cell_config(cfg: ScenarioConfig) -> CellSolveConfig:
    return CellSolveConfig(cg_tolerance=cfg.cell_tolerance)


def default_source(grid: MacroGrid) -> FieldPair:
    """Fixed divergence-free pair built from the two lowest box modes, unit L2 norm.

    ``f_u = (sin k x_2, sin k x_3, sin k x_1)`` and
    ``f_v = (cos k x_3, cos k x_1, cos k x_2)`` with ``k = 2 pi / side``; each
    component is independent of its own coordinate, so both are solenoidal.
    """
    X = grid.nodes()
    k = 2.0 * np.pi / grid.side
    fu = np.stack([np.sin(k * X[1]), np.sin(k * X[2]), np.sin(k * X[0])]).astype(complex)
    fv = np.stack([np.cos(k * X[2]), np.cos(k * X[0]), np.cos(k * X[1])]).astype(complex)
    f = FieldPair(fu, fv, grid).projected()
    return f * (1.0 / f.l2_norm())

"""Convergence studies: fine resolvent versus the two-scale expansion over a list of epsilons."""

from __future__ import annotations

import math
import multiprocessing
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..effective import TwoScaleSampler, effective_fields, tensors_from_families, theta_multiplier
from ..expansion import Expansion, divergence_fixer, partial_sum, estimate_error
from ..fields import FieldPair, fourier_resample
from ..maxwell import MaxwellOperator, resolvent_solve
from .config import ScenarioConfig
from .scenarios import (
    SCENARIO_LABEL,
    build_models,
    cell_config,
    cell_grid,
    closure_grid,
    default_source,
    fine_grid,
    macro_grid,
)

__all__ = ["RateFit", "ConvergenceReport", "fit_rate", "run_scenario", "closure_study", "RATE_WINDOW"]

RATE_WINDOW = (0.7, 1.3)
CLOSURE_LIMIT = 1e-9
SUPPORT_LIMIT = 1e-10


@dataclass
class RateFit:
    slope: float | None
    intercept: float | None
    half_width: float | None
    status: str

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "half_width": self.half_width, "status": self.status}


def fit_rate(epsilons, errors) -> RateFit:
    """Least-squares fit of ``log error = slope log eps + intercept``.

    The half-width is the 95% Student-t interval of the slope (``nan`` for
    exactly three collinear points is avoided: zero residual gives zero
    width).  Fewer than three points or non-positive / identical errors are
    flagged and not fitted.
    """
    from scipy import stats

    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size < 3:
        return RateFit(None, None, None, "too-few-points")
    if not np.all(np.isfinite(err)) or np.any(err <= 0):
        return RateFit(None, None, None, "degenerate")
    if np.ptp(np.log(err)) <= 1e-12 * max(1.0, abs(np.log(err)).max()):
        return RateFit(None, None, None, "degenerate")
    x, y = np.log(eps), np.log(err)
    res = stats.linregress(x, y)
    dof = x.size - 2
    half = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else 0.0
    return RateFit(float(res.slope), float(res.intercept), half, "ok")


@dataclass
class ConvergenceReport:
    scenario: str
    config: dict
    rows: list
    fit: RateFit
    closure: dict
    tensors: dict
    homogenized: dict
    flags: dict
    timings: dict = field(default_factory=dict)
    label: str = SCENARIO_LABEL

    @property
    def passed(self) -> bool:
        return all(v for v in self.flags.values() if v is not None)

    def as_dict(self) -> dict:
        """Report content without timings (timings are written separately)."""
        return {
            "scenario": self.scenario,
            "label": self.label,
            "config": self.config,
            "tensors": self.tensors,
            "homogenized": self.homogenized,
            "rows": self.rows,
            "fit": self.fit.as_dict(),
            "closure": self.closure,
            "flags": self.flags,
            "passed": self.passed,
        }


# State shared with forked workers; coefficient models hold closures and cannot be pickled.
_SHARED: dict = {}


def _shared_row(epsilon) -> tuple[dict, dict]:
    return _row((epsilon, *_SHARED["context"]))


def _row(args) -> tuple[dict, dict]:
    """One epsilon row; never raises (failures are recorded with their stage)."""
    epsilon, cfg, tensors, hom_u, hom_v, models = args
    row = {"epsilon": float(epsilon), "epsilon_text": str(epsilon), "status": "ok", "stage": None, "message": None}
    timings = {}
    stage = "setup"
    try:
        clock = time.perf_counter()
        fine = fine_grid(cfg, epsilon)
        row["fine_resolution"] = fine.shape[0]
        macro = tensors.grid
        f = default_source(macro)
        f_fine = FieldPair(
            fourier_resample(f.u, macro, fine.shape), fourier_resample(f.v, macro, fine.shape), fine
        ).projected()
        stage = "fine-solve"
        op = MaxwellOperator.fine(models[0], models[1], fine, float(epsilon), nodes_per_period=cfg.nodes_per_period)
        sol = resolvent_solve(op, f_fine, cfg.spectral_shift, cfg.resolvent_tolerance)
        row["fine_residual"] = sol.residual
        row["fine_iterations"] = sol.iterations
        row["fine_divergence"] = max(sol.divergence)
        timings["fine_solve"] = time.perf_counter() - clock
        clock = time.perf_counter()
        stage = "expansion"
        hu = fourier_resample(hom_u, macro, fine.shape)
        hv = fourier_resample(hom_v, macro, fine.shape)
        if cfg.through_order == 0:
            theta = theta_multiplier(models[0], models[1], tensors, float(epsilon), fine,
                                     nodes_per_period=cfg.nodes_per_period)
            u0, v0 = theta.apply(hu, hv)
            approx = FieldPair(u0, v0, fine)
        else:
            expansion = Expansion(tensors, cfg.spectral_shift, hat_tolerance=cfg.hat_tolerance)
            terms = [expansion.leading_term(f)]
            for _ in range(cfg.through_order):
                terms.append(expansion.recurrence_step(terms))
            approx = partial_sum(expansion, terms, float(epsilon), fine, fix_divergence=False,
                                 nodes_per_period=cfg.nodes_per_period)
        stage = "error"
        row["error"] = estimate_error(sol.state, approx, cfg.through_order)
        row["error_homogenized"] = (sol.state - FieldPair(hu, hv, fine)).l2_norm()
        row["through_order"] = cfg.through_order
        timings["expansion"] = time.perf_counter() - clock
    except Exception as exc:  # fail-soft: the row records what went wrong
        row["status"] = "failed"
        row["stage"] = stage
        row["message"] = f"{type(exc).__name__}: {exc}"
        timings["traceback"] = traceback.format_exc()
    return row, timings


def closure_study(cfg: ScenarioConfig, models, families=None) -> dict:
    """Order-1 recurrence on the closure grid: next-order solvability, supports and the divergence fixer.

    The divergence source is ``-div_x u~_1`` evaluated at ``y = x / eps``
    for ``eps = closure_epsilon`` on the closure grid, i.e. the source that
    the fixer removes from the order-1 partial sum.
    """
    grid = closure_grid(cfg)
    if families is None:
        tensors = effective_fields(models[0], models[1], grid, cell_grid(cfg), cell_config(cfg),
                                   method="blend", blend_nodes=cfg.blend_nodes)
    else:
        tensors = tensors_from_families(families[0], families[1], grid)
    expansion = Expansion(tensors, cfg.spectral_shift, hat_tolerance=cfg.hat_tolerance)
    f = default_source(grid)
    t0 = expansion.leading_term(f)
    t1 = expansion.recurrence_step([t0])
    compat = expansion.next_compatibility(t1)
    out = {
        "grid": [grid.shape[0], grid.stencil],
        "order1_solvability": max(t1.diagnostics["compatibility_u"] + t1.diagnostics["compatibility_v"]),
        "order2_solvability_u": compat["u_system"],
        "order2_solvability_v": compat["v_system"],
        "order2_solvability": compat["max"],
        "tilde_outside": t1.diagnostics["tilde_outside"],
        "tilde_terms": list(t1.diagnostics["tilde_terms"]),
        "hat_residual": t1.diagnostics["hat_residual"],
    }
    eps = float(cfg.closure_epsilon)
    sampler = TwoScaleSampler(expansion.cell, grid, eps)
    ratios = []
    defects = []
    for tilde in (t1.tilde_u, t1.tilde_v):
        g = -tilde.div_x().evaluate(sampler)
        if np.abs(g).max() == 0.0:
            ratios.append(0.0)
            defects.append(0.0)
            continue
        fix = divergence_fixer(g, grid)
        ratios.append(fix.h1_ratio)
        defects.append(fix.divergence_defect)
        out["delta_bound"] = fix.h1_bound
    out["delta_bound"] = float(math.sqrt(2 * cfg.support_radius**2 + 6))
    out["delta_h1_ratio"] = max(ratios)
    out["delta_divergence_defect"] = max(defects)
    out["delta_epsilon"] = eps
    return out


def run_scenario(cfg: ScenarioConfig, *, workers: int = 1, closure: bool = True) -> ConvergenceReport:
    """Full convergence study of one scenario.

    Rows run concurrently up to ``workers`` processes; each row is
    computed independently from the same inputs, so the report does not
    depend on the worker count.  Rows are sorted by epsilon descending.
    """
    timings: dict = {}
    clock = time.perf_counter()
    models = build_models(cfg)
    macro = macro_grid(cfg)
    tensors = effective_fields(models[0], models[1], macro, cell_grid(cfg), cell_config(cfg),
                               method="blend", blend_nodes=cfg.blend_nodes)
    timings["tensors"] = time.perf_counter() - clock
    clock = time.perf_counter()
    f = default_source(macro)
    hom = resolvent_solve(MaxwellOperator.homogenized(tensors), f, cfg.spectral_shift, cfg.resolvent_tolerance)
    timings["homogenized"] = time.perf_counter() - clock
    homogenized = {"residual": hom.residual, "iterations": hom.iterations, "method": hom.method}

    epsilons = sorted(cfg.epsilons, key=lambda e: Fraction(e), reverse=True)
    context = (cfg, tensors, hom.state.u, hom.state.v, models)
    if workers > 1 and len(epsilons) > 1:
        _SHARED["context"] = context
        try:
            with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("fork")) as pool:
                results = list(pool.map(_shared_row, epsilons))
        finally:
            _SHARED.clear()
    else:
        results = [_row((e, *context)) for e in epsilons]
    rows = [r for r, _ in results]
    timings["rows"] = {r["epsilon_text"]: t for r, t in results}

    ok = [r for r in rows if r["status"] == "ok"]
    identity = all(cfg.model_params(w)[0] == "identity" for w in ("alpha", "mu"))
    if identity:
        fit = RateFit(None, None, None, "skipped-identity")
    else:
        fit = fit_rate([r["epsilon"] for r in ok], [r["error"] for r in ok])

    closure_block = {}
    if closure:
        clock = time.perf_counter()
        try:
            closure_block = closure_study(cfg, models, (tensors.family_u, tensors.family_v))
        except Exception as exc:
            closure_block = {"status": "failed", "message": f"{type(exc).__name__}: {exc}"}
        timings["closure"] = time.perf_counter() - clock

    flags = {"rows_ok": len(ok) == len(rows)}
    if identity:
        flags["identity_exact"] = all(r["error"] <= 10 * cfg.resolvent_tolerance for r in ok) if ok else None
    elif fit.status == "ok":
        flags["rate_in_window"] = RATE_WINDOW[0] <= fit.slope <= RATE_WINDOW[1]
    else:
        flags["rate_in_window"] = False if len(ok) >= 3 else None
    if closure_block:
        if "order2_solvability" in closure_block:
            flags["closure"] = closure_block["order2_solvability"] <= CLOSURE_LIMIT
            flags["support"] = closure_block["tilde_outside"] <= SUPPORT_LIMIT
            flags["delta_bound"] = closure_block["delta_h1_ratio"] <= closure_block["delta_bound"]
        else:
            flags["closure"] = False
    return ConvergenceReport(
        cfg.name, cfg.as_dict(), rows, fit, closure_block, tensors.summary(), homogenized, flags, timings
    )

"""Command line interface: ``curlhom {validate,tensors,solve,sweep,report}``.

Exit codes: 0 when every check passes, 2 on a numerical acceptance failure,
1 on an execution error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..cell import correctors
from ..coefficients import random_smooth_spd, validate
from ..effective import effective_fields, voigt_reuss_bounds
from ..fields import FieldPair, dump_field, fourier_resample
from ..maxwell import MaxwellOperator, resolvent_solve
from .config import ConfigError, format_config, parse_epsilons
from .report import export_report, load_report, to_csv, to_json
from .scenarios import build_models, cell_config, cell_grid, default_source, fine_grid, macro_grid, resolve_config
from .sweep import run_scenario

__all__ = ["main", "build_parser"]

log = logging.getLogger("curlhom")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curlhom", description="Two-scale Maxwell resolvent homogenization")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="shipped scenario name or path to a config file")
        p.add_argument("--out", default=None, help="output directory (default: the config's output entry)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized property checks")
        p.add_argument("--workers", type=int, default=1, help="process count for epsilon rows")
        p.add_argument("--order", type=int, default=None, help="expansion order N (errors through N - 2)")
        p.add_argument("--eps", default=None, help="comma-separated epsilons such as 1/4,1/8")

    common(sub.add_parser("validate", help="coefficient and assumption checks"))
    common(sub.add_parser("tensors", help="effective tensors only"))
    common(sub.add_parser("solve", help="single fine resolvent solve at the first epsilon"))
    common(sub.add_parser("sweep", help="full convergence study"))
    rep = sub.add_parser("report", help="re-render outputs from report.json")
    rep.add_argument("--out", required=True, help="directory holding report.json")
    rep.add_argument("--config", default=None, help="unused; accepted for symmetry")
    return parser


def _config(args):
    cfg = resolve_config(args.config)
    eps = parse_epsilons(args.eps) if args.eps else None
    return cfg.with_overrides(epsilons=eps, order=args.order, output=args.out)


def _validate(cfg, args) -> int:
    models = build_models(cfg)
    result = {"config": cfg.name}
    ok = True
    for name, model in zip(("alpha", "mu"), models):
        rep = validate(model)
        result[name] = rep.as_dict()
        ok &= rep.passed
    rng = np.random.default_rng(args.seed)
    grid = cell_grid(cfg)
    cells = []
    for _ in range(3):
        beta = random_smooth_spd(grid, rng)
        corr = correctors(beta, cell_config(cfg))
        lam, asym = corr.effective("energy")
        harm, arith = voigt_reuss_bounds(beta)
        defects = corr.invariant_defects()
        mean_defect, rot_defect = defects["mean_defect"], defects["rot_residual"]
        bracket = min(np.linalg.eigvalsh(lam - harm)[0], np.linalg.eigvalsh(arith - lam)[0])
        passed = mean_defect <= 1e-12 and rot_defect <= 1e-10 and bracket >= -1e-8
        ok &= passed
        cells.append({"mean_defect": mean_defect, "rot_defect": rot_defect, "bracket_margin": float(bracket),
                      "asymmetry": asym, "passed": passed})
    result["random_cells"] = cells
    result["passed"] = bool(ok)
    print(to_json(result), end="")
    return EXIT_OK if ok else EXIT_FAIL


def _tensors(cfg, args) -> int:
    models = build_models(cfg)
    macro = macro_grid(cfg)
    tensors = effective_fields(models[0], models[1], macro, cell_grid(cfg), cell_config(cfg),
                               method="blend", blend_nodes=cfg.blend_nodes)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    dump_field(out / "lambda_u.bin", tensors.lambda_u.full().reshape((9,) + macro.shape), macro)
    dump_field(out / "lambda_v.bin", tensors.lambda_v.full().reshape((9,) + macro.shape), macro)
    summary = tensors.summary()
    (out / "tensors.json").write_text(to_json(summary))
    print(to_json(summary), end="")
    ok = summary["lambda_u"]["min_eigenvalue"] > 0 and summary["lambda_v"]["min_eigenvalue"] > 0
    return EXIT_OK if ok else EXIT_FAIL


def _solve(cfg, args) -> int:
    models = build_models(cfg)
    eps = max(cfg.epsilons)
    fine = fine_grid(cfg, eps)
    macro = macro_grid(cfg)
    f = default_source(macro)
    f = FieldPair(fourier_resample(f.u, macro, fine.shape), fourier_resample(f.v, macro, fine.shape), fine)
    op = MaxwellOperator.fine(models[0], models[1], fine, float(eps), nodes_per_period=cfg.nodes_per_period)
    sol = resolvent_solve(op, f.projected(), cfg.spectral_shift, cfg.resolvent_tolerance)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    dump_field(out / "solution_u.bin", sol.state.u, fine)
    dump_field(out / "solution_v.bin", sol.state.v, fine)
    (out / "solve_log.jsonl").write_text(sol.log_lines())
    summary = {"epsilon": str(eps), "resolution": fine.shape[0], "residual": sol.residual,
               "iterations": sol.iterations, "divergence": list(sol.divergence), "method": sol.method}
    print(to_json(summary), end="")
    return EXIT_OK


def _sweep(cfg, args) -> int:
    report = run_scenario(cfg, workers=max(1, args.workers))
    export_report(report, cfg.output)
    (Path(cfg.output) / "config.ini").write_text(format_config(cfg))
    for row in report.rows:
        print(f"eps={row['epsilon_text']:>6} status={row['status']} error={row.get('error')}")
    print(f"fit: {report.fit.as_dict()}")
    print(f"flags: {report.flags}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _report(args) -> int:
    data = load_report(args.out)
    out = Path(args.out)
    (out / "report.csv").write_text(to_csv(data.get("rows", [])))
    (out / "report.json").write_text(to_json(data))
    print(json.dumps({"scenario": data.get("scenario"), "flags": data.get("flags"), "fit": data.get("fit")}))
    return EXIT_OK if data.get("passed") else EXIT_FAIL


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "report":
            return _report(args)
        cfg = _config(args)
        handler = {"validate": _validate, "tensors": _tensors, "solve": _solve, "sweep": _sweep}[args.verb]
        return handler(cfg, args)
    except (ConfigError, OSError, ValueError, RuntimeError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

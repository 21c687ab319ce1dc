import json
from fractions import Fraction

import numpy as np
import pytest

from curlhom.harness import (
    CSV_COLUMNS,
    ConfigError,
    export_report,
    fit_rate,
    format_config,
    load_report,
    parse_config,
    parse_epsilons,
    run_scenario,
    shipped_config,
    to_csv,
    to_json,
)
from curlhom.harness import sweep as sweep_module
from curlhom.harness.cli import main
from curlhom.harness.scenarios import SHIPPED, build_models, default_source
from curlhom.fields import MacroGrid, divergence, l2_norm

SMALL_LAMINATE = """
[scenario]
name = small-laminate
epsilons = 1/2, 1/4
output = {out}

[geometry]
profile_radius = 0.3

[alpha]
family = laminate
midpoint = 2.0
amplitude = 0.5

[mu]
family = laminate
midpoint = 1.5
amplitude = 0.25

[grids]
cell = 16, 4, 4
macro = 16
fine_min = 16
closure_macro = 16
closure_stencil = fd2
closure_epsilon = 1/2

[solver]
blend_nodes = 5
"""


# -- configuration -----------------------------------------------------------------


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_round_trip(name):
    cfg = shipped_config(name)
    again = parse_config(format_config(cfg))
    assert again == cfg
    assert format_config(again) == format_config(cfg)


def test_unknown_keys_and_sections_are_rejected():
    base = SMALL_LAMINATE.format(out="x")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(base.replace("blend_nodes = 5", "blend_nodes = 5\nwarp = 9"))
    with pytest.raises(ConfigError, match="unknown sections"):
        parse_config(base + "\n[extras]\na = 1\n")
    with pytest.raises(ConfigError, match="unknown keys for family"):
        parse_config(base.replace("amplitude = 0.25", "amplitude = 0.25\nradius = 0.1"))


@pytest.mark.parametrize(
    "edit,match",
    [
        (("output = x", "output = x\nspectral_shift = 1.0"), "imaginary"),
        (("profile_radius = 0.3", "profile_radius = 0.3\nside = 0.8"), "side"),
        (("epsilons = 1/2, 1/4", "epsilons = 2/5"), "reciprocal integer"),
        (("name = small-laminate", "name = small-laminate\norder = 1"), "order"),
    ],
)
def test_invalid_configs(edit, match):
    text = SMALL_LAMINATE.format(out="x").replace(*edit)
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_epsilon_parsing_and_fine_resolution():
    assert parse_epsilons("1/4, 1/8") == (Fraction(1, 4), Fraction(1, 8))
    cfg = shipped_config("laminate")
    assert [cfg.fine_resolution(e) for e in cfg.epsilons] == [64, 64, 128]
    assert cfg.through_order == 0


def test_default_source_is_unit_and_solenoidal():
    grid = MacroGrid(16, 1.0, 0.45)
    f = default_source(grid)
    assert f.l2_norm() == pytest.approx(1.0, rel=1e-14)
    assert l2_norm(divergence(f.u, grid), grid) < 1e-12


def test_build_models_share_profile():
    a, m = build_models(shipped_config("inclusion"))
    x = np.array([[0.1, 0.2, 0.0]])
    np.testing.assert_array_equal(a.blend(x), m.blend(x))


# -- rate fitting ------------------------------------------------------------------


@pytest.mark.parametrize("power", [1.0, 2.0])
def test_fit_rate_recovers_exact_power_law(power):
    eps = np.array([1 / 4, 1 / 8, 1 / 16])
    fit = fit_rate(eps, 0.3 * eps**power)
    assert fit.status == "ok"
    assert fit.slope == pytest.approx(power, abs=1e-12)
    # linregress forms the standard error from 1 - r**2, so exact data leaves ~sqrt(machine eps).
    assert fit.half_width <= 1e-6


def test_fit_rate_on_noisy_linear_data():
    rng = np.random.default_rng(0)
    eps = 1.0 / np.array([4, 8, 16, 32, 64])
    for _ in range(20):
        err = eps * (1 + rng.uniform(-0.1, 0.1, eps.size))
        fit = fit_rate(eps, err)
        assert 0.85 <= fit.slope <= 1.15


@pytest.mark.parametrize("errors,status", [([1.0, 1.0, 1.0], "degenerate"), ([0.0, 1.0, 2.0], "degenerate"),
                                           ([1.0, 2.0], "too-few-points")])
def test_fit_rate_flags_degenerate_input(errors, status):
    fit = fit_rate([0.5, 0.25, 0.125][: len(errors)], errors)
    assert fit.status == status and fit.slope is None


# -- reports -----------------------------------------------------------------------


def test_empty_sweep_gives_header_only_csv():
    assert to_csv([]) == ",".join(CSV_COLUMNS) + "\n"


def test_json_uses_seventeen_digits_and_round_trips():
    data = {"x": 0.1, "rows": [{"epsilon": 0.25, "error": 1 / 3, "status": "ok", "stage": None}], "n": 3}
    text = to_json(data)
    assert "0.10000000000000001" in text
    assert json.loads(text) == data
    assert to_json(json.loads(text)) == text


def test_export_and_reload(tmp_path):
    data = {"scenario": "s", "rows": [{"epsilon": 0.5, "error": 0.125, "status": "ok"}], "passed": True}
    export_report(data, tmp_path)
    assert load_report(tmp_path) == data
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[1].startswith("0.5,")


# -- sweeps ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return parse_config(SMALL_LAMINATE.format(out=out))


def test_small_sweep_report(small_config):
    report = run_scenario(small_config)
    assert [r["epsilon"] for r in report.rows] == [0.5, 0.25]
    assert all(r["status"] == "ok" for r in report.rows)
    assert report.fit.status == "too-few-points"
    assert report.closure["order2_solvability"] <= 1e-9
    assert report.closure["tilde_outside"] <= 1e-10
    assert report.closure["delta_h1_ratio"] <= report.closure["delta_bound"]
    assert "timings" not in to_json(report.as_dict())


def test_sweep_is_fail_soft(small_config, monkeypatch):
    real = sweep_module.resolvent_solve

    def flaky(op, f, E, tol, **kw):
        if op.kind == "fine" and op.epsilon == 0.25:
            raise RuntimeError("injected failure")
        return real(op, f, E, tol, **kw)

    monkeypatch.setattr(sweep_module, "resolvent_solve", flaky)
    report = run_scenario(small_config, closure=False)
    by_eps = {r["epsilon"]: r for r in report.rows}
    assert by_eps[0.5]["status"] == "ok"
    assert by_eps[0.25]["status"] == "failed" and by_eps[0.25]["stage"] == "fine-solve"
    assert report.flags["rows_ok"] is False


def test_worker_count_does_not_change_report(small_config):
    one = to_json(run_scenario(small_config, workers=1, closure=False).as_dict())
    two = to_json(run_scenario(small_config, workers=2, closure=False).as_dict())
    assert one == two


# -- command line ------------------------------------------------------------------


def test_cli_missing_config_is_execution_error(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.ini")]) == 1


def test_cli_validate_identity(capsys):
    assert main(["validate", "--config", "identity", "--seed", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] is True and len(out["random_cells"]) == 3


def test_cli_sweep_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "small.ini"
    cfg_path.write_text(SMALL_LAMINATE.format(out=tmp_path / "run"))
    code = main(["sweep", "--config", str(cfg_path), "--eps", "1/2,1/4,1/8", "--out", str(tmp_path / "run")])
    assert code in (0, 2)
    data = load_report(tmp_path / "run")
    assert len(data["rows"]) == 3
    assert main(["report", "--out", str(tmp_path / "run")]) == code
    assert (tmp_path / "run" / "timings.json").exists()


def test_cli_tensors_writes_binary_fields(tmp_path):
    cfg_path = tmp_path / "small.ini"
    cfg_path.write_text(SMALL_LAMINATE.format(out=tmp_path / "t"))
    assert main(["tensors", "--config", str(cfg_path)]) == 0
    from curlhom.fields import load_field

    values, grid = load_field(tmp_path / "t" / "lambda_u.bin")
    assert values.shape == (9, 16, 16, 16)

import numpy as np
import pytest

from curlhom.coefficients import (
    FAMILIES,
    CoefficientModel,
    RadialProfile,
    builtin,
    random_smooth_spd,
    sample_cell,
    sample_on_grid,
    validate,
)
from curlhom.fields import CellGrid, Lattice, MacroGrid


@pytest.mark.parametrize("shape", ["smoothstep", "bump"])
def test_profile_is_one_at_centre_and_zero_outside(shape):
    prof = RadialProfile(0.0, shape)
    t = np.array([0.0, 0.5, 1.0, 1.2])
    vals = prof(t)
    assert vals[0] == pytest.approx(1.0)
    assert 0.0 < vals[1] < 1.0
    np.testing.assert_array_equal(vals[2:], 0.0)


def test_profile_plateau_holds_one():
    prof = RadialProfile(0.3)
    np.testing.assert_array_equal(prof(np.array([0.0, 0.1, 0.3])), 1.0)


def test_smoothstep_is_monotone():
    t = np.linspace(0, 1, 200)
    assert np.all(np.diff(RadialProfile()(t)) <= 1e-15)


@pytest.mark.parametrize("family", FAMILIES)
def test_builtin_families_validate(family):
    model = builtin(family, 0.45, profile_radius=0.38)
    report = validate(model)
    flags = report.flags
    assert flags["positive_definite"] and flags["symmetric"] and flags["periodic"]
    if family == "separable":
        assert not flags["identity_outside"]
    else:
        assert report.passed


def test_builtin_rejects_unknown_parameter():
    with pytest.raises(ValueError, match="unknown"):
        builtin("laminate", colour="blue")
    with pytest.raises(ValueError):
        builtin("plasma")


def test_laminate_needs_positive_pattern():
    with pytest.raises(ValueError):
        builtin("laminate", midpoint=1.0, amplitude=1.5)


def test_identity_outside_support_exactly():
    model = builtin("inclusion", 0.45, profile_radius=0.4)
    x = np.array([[0.41, 0.0, 0.0], [0.3, 0.3, 0.3]])
    y = np.array([[0.1, 0.2, 0.3]])
    vals = model.evaluator(x, y)
    np.testing.assert_array_equal(vals[..., :, :], np.broadcast_to(np.eye(3), vals.shape))


def test_laminate_sampled_in_cell_matches_formula():
    model = builtin("laminate", midpoint=2.0, amplitude=1.0)
    grid = CellGrid((16, 4, 4))
    beta = sample_cell(model, np.zeros(3), grid)
    y1 = grid.axis_fractions(0)
    np.testing.assert_allclose(beta.values[:, 0, 0], 2.0 + np.sin(2 * np.pi * y1), atol=1e-14)


def test_sample_cell_requires_matching_lattice():
    model = builtin("laminate")
    grid = CellGrid(4, Lattice(np.diag([1.0, 1.0, 2.0])))
    with pytest.raises(ValueError):
        sample_cell(model, np.zeros(3), grid)


def test_sample_on_grid_uses_fast_variable():
    model = builtin("laminate", midpoint=2.0, amplitude=1.0, profile_radius=0.45)
    grid = MacroGrid(32, 1.0, 0.45)
    eps = 0.25
    alpha = sample_on_grid(model, grid, eps)
    x = np.moveaxis(grid.nodes(), 0, -1)
    s = model.blend(x)
    expected = (1 - s) + s * (2.0 + np.sin(2 * np.pi * x[..., 0] / eps))
    np.testing.assert_allclose(alpha.values, expected, atol=1e-13)


def test_validate_flags_non_spd_pattern():
    model = CoefficientModel(lambda s, f: 1.0 - 2.0 * s * np.ones(f.shape[:-1]), 0.45, floor=0.1, label="bad")
    assert not validate(model).flags["positive_definite"]


def test_random_spd_is_spd_and_reproducible():
    grid = CellGrid(8)
    a = random_smooth_spd(grid, np.random.default_rng(11))
    b = random_smooth_spd(grid, np.random.default_rng(11))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.min_eigenvalue() >= 0.5 - 1e-12

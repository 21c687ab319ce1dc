from dataclasses import replace

import numpy as np
import pytest

from curlhom.coefficients import CoefficientModel, builtin
from curlhom.effective import TwoScaleSampler, effective_fields
from curlhom.expansion import (
    Expansion,
    SeparatedField,
    bump_source,
    divergence_fixer,
    estimate_error,
    partial_sum,
    term_norm_diagnostics,
)
from curlhom.fields import CellGrid, FieldPair, MacroGrid, curl, divergence, fourier_resample, l2_norm
from curlhom.maxwell import MaxwellOperator, random_solenoidal_pair, resolvent_solve

# -- divergence fixer -------------------------------------------------------------


def test_fixer_of_zero_is_zero():
    grid = MacroGrid(16, 1.0, 0.45)
    fix = divergence_fixer(np.zeros(grid.shape), grid)
    np.testing.assert_array_equal(fix.delta, 0.0)


def test_fixer_of_constant_is_position_vector():
    grid = MacroGrid(16, 1.0, 0.45)
    fix = divergence_fixer(lambda x: 3.0 * np.ones(x.shape[1:]), grid, check_support=False)
    np.testing.assert_allclose(fix.delta, grid.nodes(), atol=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_fixer_matches_closed_form_for_bump_sources(degree):
    grid = MacroGrid(64, 1.0, 0.45)
    g, delta_exact = bump_source(grid, degree)
    fix = divergence_fixer(g, grid)
    np.testing.assert_allclose(fix.delta, delta_exact, atol=1e-9 * np.abs(delta_exact).max())
    assert fix.divergence_defect <= 1e-8
    assert l2_norm(divergence(fix.delta, grid) - g, grid) <= 1e-8 * l2_norm(g, grid)
    assert fix.within_bound


def test_fixer_is_complex_linear():
    grid = MacroGrid(32, 1.0, 0.45)
    g, _ = bump_source(grid, 1)
    c = 0.3 - 2.0j
    a = divergence_fixer(g, grid).delta
    b = divergence_fixer(c * g, grid).delta
    np.testing.assert_allclose(b, c * a, atol=1e-12)


def test_fixer_refuses_unsupported_source():
    grid = MacroGrid(16, 1.0, 0.45)
    with pytest.raises(ValueError, match="outside"):
        divergence_fixer(np.ones(grid.shape), grid)


# -- separated fields -------------------------------------------------------------


def test_separated_rot_and_div_act_on_coefficients():
    macro = MacroGrid(8, 1.0, 0.45)
    cell = CellGrid(4)
    rng = np.random.default_rng(0)
    coefs = rng.standard_normal((2,) + macro.shape) + 1j * rng.standard_normal((2,) + macro.shape)
    tables = rng.standard_normal((2, 3) + cell.shape)
    w = SeparatedField(macro, cell, True, np.array([0, 1]), coefs, tables)
    node = (3, 1, 6)
    # direct: for each cell node, differentiate x -> w(x, y) on the macro grid
    dense = np.einsum("txyz,tcabd->abdcxyz", coefs, tables)
    rot_direct = np.moveaxis(curl(dense, macro)[(...,) + node], -1, 0)
    div_direct = divergence(dense, macro)[(...,) + node]
    np.testing.assert_allclose(w.rot_x().cell_values(node), rot_direct, atol=1e-12)
    np.testing.assert_allclose(w.div_x().cell_values(node), div_direct, atol=1e-12)
    np.testing.assert_allclose(w.mean(), np.mean(dense, axis=(0, 1, 2)), atol=1e-14)


def test_separated_offset_and_bound():
    macro = MacroGrid(8, 1.0, 0.45)
    cell = CellGrid(4)
    offset = np.zeros((3,) + macro.shape, dtype=complex)
    offset[0] = 2.0
    w = SeparatedField.constant(macro, cell, offset)
    np.testing.assert_allclose(w.mean(), offset)
    assert w.coefficient_bound(macro.outside_mask()) == pytest.approx(2.0)
    np.testing.assert_allclose(w.rot_x().offset, curl(offset, macro))


# -- expansion on identity media -------------------------------------------------------


@pytest.fixture(scope="module")
def identity_expansion():
    model = builtin("identity", 0.45)
    macro = MacroGrid(16, 1.0, 0.45)
    tensors = effective_fields(model, model, macro, CellGrid(4), method="blend", blend_nodes=3)
    return model, macro, Expansion(tensors, 1j)


def test_identity_leading_term_is_constant_coefficient_resolvent(identity_expansion):
    _, macro, expansion = identity_expansion
    f = random_solenoidal_pair(macro, np.random.default_rng(0), max_mode=3)
    term = expansion.leading_term(f)
    direct = resolvent_solve(MaxwellOperator.identity(macro), f, 1j, 1e-12).state
    np.testing.assert_allclose(term.hat_u, direct.u, atol=1e-10)
    np.testing.assert_allclose(term.a_coeffs, term.hat_u, atol=1e-14)


def test_identity_higher_terms_vanish(identity_expansion):
    _, macro, expansion = identity_expansion
    f = random_solenoidal_pair(macro, np.random.default_rng(1), max_mode=3)
    t0 = expansion.leading_term(f)
    t1 = expansion.recurrence_step([t0])
    assert len(t1.tilde_u) == 0 and len(t1.tilde_v) == 0
    np.testing.assert_allclose(t1.hat_u, 0.0, atol=1e-14)
    rows = term_norm_diagnostics(expansion, [t0, t1], s=1)
    assert rows[1]["hat_u_norm"] == 0.0 and rows[1]["tilde_u_norm"] == 0.0


def test_identity_partial_sum_equals_homogenized_solution(identity_expansion):
    model, macro, expansion = identity_expansion
    f = random_solenoidal_pair(macro, np.random.default_rng(2), max_mode=3)
    t0 = expansion.leading_term(f)
    fine = MacroGrid(32, 1.0, 0.45)
    ps = partial_sum(expansion, [t0], 0.25, fine, fix_divergence=False)
    fine_f = FieldPair(fourier_resample(f.u, macro, fine.shape), fourier_resample(f.v, macro, fine.shape), fine)
    fine_sol = resolvent_solve(MaxwellOperator.fine(model, model, fine, 0.25), fine_f, 1j, 1e-12).state
    assert estimate_error(fine_sol, ps, 0) <= 1e-9


def test_estimate_error_requires_shared_grid(identity_expansion):
    _, macro, _ = identity_expansion
    a = FieldPair.zeros(macro)
    b = FieldPair.zeros(macro.with_resolution(8))
    with pytest.raises(ValueError):
        estimate_error(a, b)


# -- expansion on a non-symmetric medium --------------------------------------------


def _asymmetric_pattern(s, frac):
    y, z = frac[..., 0], frac[..., 1]
    cell = 2 + 0.5 * np.sin(2 * np.pi * y) + 0.3 * np.cos(4 * np.pi * y + 0.7) + 0.2 * np.sin(2 * np.pi * (y + z) + 0.3)
    return (1 - s) + s * cell


@pytest.fixture(scope="module")
def asymmetric_expansion():
    alpha = CoefficientModel(_asymmetric_pattern, 0.45, profile_radius=0.3, floor=1.0, label="asymmetric")
    mu = CoefficientModel(lambda s, f: 1 + 0.5 * (_asymmetric_pattern(s, f) - 1), 0.45, profile_radius=0.3,
                          floor=1.0, label="asymmetric-half")
    macro = MacroGrid(16, 1.0, 0.45, "fd2")
    tensors = effective_fields(alpha, mu, macro, CellGrid((16, 16, 4)), method="blend", blend_nodes=7)
    expansion = Expansion(tensors, 1j)
    f = random_solenoidal_pair(macro, np.random.default_rng(3), max_mode=2)
    t0 = expansion.leading_term(f)
    return expansion, f, t0


def test_recurrence_closes_next_order_solvability(asymmetric_expansion):
    expansion, _, t0 = asymmetric_expansion
    open_step = expansion.recurrence_step([t0], close=False)
    closed = expansion.recurrence_step([t0])
    assert expansion.next_compatibility(open_step)["max"] > 1e-6
    assert expansion.next_compatibility(closed)["max"] <= 1e-9
    assert max(closed.diagnostics["compatibility_u"] + closed.diagnostics["compatibility_v"]) <= 1e-9
    assert closed.diagnostics["tilde_outside"] <= 1e-10
    assert closed.support_flag


def test_leading_term_cell_average_is_hat(asymmetric_expansion):
    expansion, _, t0 = asymmetric_expansion
    np.testing.assert_allclose(expansion.u_field(t0).mean(), t0.hat_u, atol=1e-9)
    np.testing.assert_allclose(expansion.v_field(t0).mean(), t0.hat_v, atol=1e-9)


def test_expansion_is_linear_in_source(asymmetric_expansion):
    expansion, f, t0 = asymmetric_expansion
    c = 2.0 - 0.5j
    t0c = expansion.leading_term(f * c)
    np.testing.assert_allclose(t0c.hat_u, c * t0.hat_u, atol=1e-10 * np.abs(t0.hat_u).max())
    t1 = expansion.recurrence_step([t0])
    t1c = expansion.recurrence_step([t0c])
    np.testing.assert_allclose(t1c.tilde_u.coefs, c * t1.tilde_u.coefs, atol=1e-10 * np.abs(t1.tilde_u.coefs).max())
    np.testing.assert_allclose(t1c.hat_v, c * t1.hat_v, atol=1e-10 * np.abs(t1.hat_v).max())


def test_two_scale_evaluation_is_resolution_independent(asymmetric_expansion):
    expansion, _, t0 = asymmetric_expansion
    eps = 0.5
    coarse = MacroGrid(16, 1.0, 0.45)
    fine = MacroGrid(32, 1.0, 0.45)
    a = expansion.evaluate_term(t0, TwoScaleSampler(expansion.cell, coarse, eps))
    b = expansion.evaluate_term(t0, TwoScaleSampler(expansion.cell, fine, eps))
    np.testing.assert_allclose(b.u[:, ::2, ::2, ::2], a.u, atol=1e-8)


def test_partial_sum_divergence_fix(asymmetric_expansion):
    expansion, _, t0 = asymmetric_expansion
    t1 = expansion.recurrence_step([t0], close=False)
    grid = MacroGrid(16, 1.0, 0.45)
    ps = partial_sum(expansion, [t0, t1], 0.5, grid)
    assert ps.delta is not None
    total = ps.total()
    assert total.u.shape == (3,) + grid.shape
    assert np.all(np.isfinite(total.stacked()))


def test_term_norms_scale_with_source(asymmetric_expansion):
    expansion, f, t0 = asymmetric_expansion
    t0c = expansion.leading_term(f * 2.0)
    base = term_norm_diagnostics(expansion, [t0], s=1)[0]
    double = term_norm_diagnostics(expansion, [t0c], s=1)[0]
    assert double["hat_u_norm"] == pytest.approx(2 * base["hat_u_norm"], rel=1e-9)
    with pytest.raises(ValueError):
        term_norm_diagnostics(expansion, [replace(t0, n=5)], s=1)

import numpy as np
import pytest

from curlhom.cell import CellSolveConfig
from curlhom.coefficients import builtin
from curlhom.effective import (
    TwoScaleSampler,
    cell_family,
    chebyshev_lobatto,
    check_resolution,
    effective_at,
    effective_fields,
    lagrange_weights,
    theta_multiplier,
    voigt_reuss_bounds,
)
from curlhom.fields import CellGrid, Lattice, MacroGrid, MatrixField


def test_lobatto_nodes_span_unit_interval():
    nodes = chebyshev_lobatto(5)
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert np.all(np.diff(nodes) > 0)


@pytest.mark.parametrize("count", [3, 7, 13])
def test_lagrange_weights_reproduce_polynomials(count):
    nodes = chebyshev_lobatto(count)
    s = np.linspace(0, 1, 17)
    w = lagrange_weights(nodes, s)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-13)
    p = lambda t: 1 + 2 * t - t ** (count - 1)  # noqa: E731
    np.testing.assert_allclose(np.einsum("q,qs->s", p(nodes), w), p(s), atol=1e-12)
    np.testing.assert_allclose(lagrange_weights(nodes, nodes), np.eye(count), atol=1e-15)


def test_voigt_reuss_of_laminate():
    grid = CellGrid((64, 4, 4))
    y = grid.axis_fractions(0)[:, None, None]
    beta = MatrixField(grid, np.broadcast_to(2 + np.sin(2 * np.pi * y), grid.shape), isotropic=True)
    harm, arith = voigt_reuss_bounds(beta)
    np.testing.assert_allclose(np.diag(harm), np.sqrt(3.0), rtol=1e-12)
    np.testing.assert_allclose(np.diag(arith), 2.0, rtol=1e-12)


def test_effective_at_identity_point_is_identity():
    model = builtin("inclusion", 0.45)
    lam, info = effective_at(np.array([0.44, 0.0, 0.0]), model, CellGrid(8))
    np.testing.assert_allclose(lam, np.eye(3), atol=1e-12)


def test_effective_at_laminate_centre():
    model = builtin("laminate", 0.45, midpoint=2.0, amplitude=1.0)
    lam, info = effective_at(np.zeros(3), model, CellGrid((128, 4, 4)), CellSolveConfig(cg_tolerance=1e-13))
    np.testing.assert_allclose(lam, np.diag([np.sqrt(3.0), 2.0, 2.0]), atol=1e-8)
    assert min(info["margins"]) >= -1e-8


@pytest.fixture(scope="module")
def inclusion_setup():
    alpha = builtin("inclusion", 0.45, profile_radius=0.4)
    mu = builtin("inclusion", 0.45, contrast=2.0, profile_radius=0.4)
    macro = MacroGrid(8, 1.0, 0.45)
    cell = CellGrid(12)
    return alpha, mu, macro, cell


def test_blend_and_nodal_tensors_agree(inclusion_setup):
    alpha, mu, macro, cell = inclusion_setup
    nodal = effective_fields(alpha, mu, macro, cell, method="nodes")
    blend = effective_fields(alpha, mu, macro, cell, method="blend", blend_nodes=13)
    np.testing.assert_allclose(blend.lambda_u.full(), nodal.lambda_u.full(), atol=1e-9)
    np.testing.assert_allclose(blend.lambda_v.full(), nodal.lambda_v.full(), atol=1e-9)
    summary = nodal.summary()
    assert summary["lambda_u"]["identity_defect_outside"] <= 1e-12
    assert summary["lambda_u"]["min_eigenvalue"] > 1.0 - 1e-12


def test_effective_fields_rejects_radius_mismatch(inclusion_setup):
    alpha, mu, _, cell = inclusion_setup
    with pytest.raises(ValueError):
        effective_fields(alpha, mu, MacroGrid(8, 1.0, 0.3), cell)


def test_flux_form_equals_energy_form_on_family():
    model = builtin("inclusion", 0.45)
    fam = cell_family(model, CellGrid(12), count=3)
    for corr, lam in zip(fam.correctors, fam.tensors):
        np.testing.assert_allclose(corr.effective("energy")[0], lam, atol=1e-10)


def test_sampler_is_exact_on_cell_nodes():
    cell = CellGrid(8)
    fine = MacroGrid(32, 1.0, 0.45)
    eps = 0.25
    table = np.random.default_rng(0).standard_normal((2,) + cell.shape)
    out = TwoScaleSampler(cell, fine, eps).sample(table)
    # x_i = -1/2 + i/32, y = x / eps = -2 + i/8 -> cell index i mod 8
    idx = np.arange(32) % 8
    np.testing.assert_allclose(out, table[:, idx][:, :, idx][:, :, :, idx], atol=1e-13)


def test_sampler_needs_diagonal_lattice():
    cell = CellGrid(8, Lattice(np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])))
    with pytest.raises(ValueError):
        TwoScaleSampler(cell, MacroGrid(16, 1.0, 0.45), 0.5)


def test_check_resolution_names_requirement():
    with pytest.raises(ValueError, match="need at least 128"):
        check_resolution(MacroGrid(64, 1.0, 0.45), 1 / 16)
    check_resolution(MacroGrid(128, 1.0, 0.45), 1 / 16)


def test_theta_is_identity_for_identity_media():
    model = builtin("identity")
    macro = MacroGrid(16, 1.0, 0.45)
    tensors = effective_fields(model, model, macro, CellGrid(4), method="blend", blend_nodes=3)
    theta = theta_multiplier(model, model, tensors, 0.5, macro)
    np.testing.assert_allclose(theta.block_u.values, np.eye(3)[:, :, None, None, None] * np.ones(macro.shape),
                               atol=1e-14)


def test_theta_is_identity_outside_support(inclusion_setup):
    alpha, mu, _, cell = inclusion_setup
    macro = MacroGrid(16, 1.0, 0.45)
    tensors = effective_fields(alpha, mu, macro, cell, method="blend", blend_nodes=5)
    theta = theta_multiplier(alpha, mu, tensors, 0.5, macro)
    outside = macro.outside_mask()
    block = theta.block_u.values[..., outside]
    np.testing.assert_allclose(block, np.eye(3)[:, :, None] * np.ones(block.shape[-1]), atol=1e-12)

"""Effective tensors, blending-node cell families and the corrector multiplier.

Built-in coefficient models depend on ``x`` only through a blending scalar
``s(x)``.  Two ways of producing ``Lambda(x)`` are offered:

``method="nodes"``
    one cell solve per distinct blending value present on the macro grid
    (exact nodal values; radial profiles give few distinct values);
``method="blend"``
    cell solves at Chebyshev-Lobatto nodes ``s_q`` in ``[0, 1]`` and
    barycentric interpolation in ``s``.  This is the representation used by
    the expansion, since it keeps every two-scale quantity a finite sum of
    ``(macro coefficient) x (cell table)`` products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CellSolveConfig, CorrectorSet, correctors
from .coefficients import CoefficientModel, sample_cell
from .fields import CellGrid, MacroGrid, MatrixField, PeriodicGrid, trig_interp_matrix

__all__ = [
    "EffectiveTensors",
    "CellFamily",
    "ThetaMultiplier",
    "TwoScaleSampler",
    "chebyshev_lobatto",
    "lagrange_weights",
    "effective_at",
    "voigt_reuss_bounds",
    "cell_family",
    "effective_fields",
    "tensors_from_families",
    "theta_multiplier",
    "min_nodes_per_period",
]

min_nodes_per_period = 8


# ---------------------------------------------------------------------------
# Interpolation in the blending variable
# ---------------------------------------------------------------------------


def chebyshev_lobatto(count: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes on ``[0, 1]``, starting at 0."""
    if count < 2:
        raise ValueError("need at least two blending nodes")
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(count) / (count - 1)))


def _lobatto_weights(count: int) -> np.ndarray:
    w = (-1.0) ** np.arange(count)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def lagrange_weights(nodes: np.ndarray, s) -> np.ndarray:
    """Lagrange basis values ``l_q(s)`` at Chebyshev-Lobatto ``nodes``.

    Returns shape ``(Q,) + shape(s)``; the weights sum to one and reproduce
    polynomials of degree ``Q - 1`` exactly.  Exact node hits give unit
    vectors.
    """
    s = np.asarray(s, dtype=float)
    bw = _lobatto_weights(nodes.size)
    diff = s[None, ...] - nodes.reshape((-1,) + (1,) * s.ndim)
    hit = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = bw.reshape((-1,) + (1,) * s.ndim) / diff
        out = terms / np.sum(terms, axis=0, keepdims=True)
    exact = np.any(hit, axis=0)
    if np.any(exact):
        out = np.where(exact[None, ...], hit.astype(float), out)
    return out


# ---------------------------------------------------------------------------
# Single cell tensors
# ---------------------------------------------------------------------------


def voigt_reuss_bounds(beta: MatrixField) -> tuple[np.ndarray, np.ndarray]:
    """Harmonic (Reuss) and arithmetic (Voigt) cell means of ``beta``."""
    arith = beta.mean()
    harm = np.linalg.inv(beta.inverse.mean())
    return 0.5 * (harm + harm.T), arith


def effective_at(
    x,
    model: CoefficientModel,
    grid: CellGrid,
    cfg: CellSolveConfig = CellSolveConfig(),
    *,
    tag: str = "alpha",
    warm_start: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Effective tensor ``|Omega|^{-1} (beta zeta_p, zeta_k)`` at the macro point ``x``.

    Returns
    -------
    lam : ndarray
        Symmetrized 3x3 tensor.
    info : dict
        ``asymmetry`` before symmetrization, solver ``residuals`` and
        ``iterations``, Voigt-Reuss ``margins`` and the corrector set.
    """
    beta = sample_cell(model, x, grid)
    corr = correctors(beta, cfg, tag=tag, x=x, warm_start=warm_start)
    lam, asym = corr.effective("energy")
    harm, arith = voigt_reuss_bounds(beta)
    margins = (float(np.linalg.eigvalsh(lam - harm)[0]), float(np.linalg.eigvalsh(arith - lam)[0]))
    info = {
        "asymmetry": asym,
        "residuals": corr.residuals,
        "iterations": corr.iterations,
        "margins": margins,
        "correctors": corr,
    }
    return lam, info


# ---------------------------------------------------------------------------
# Cell families over the blending variable
# ---------------------------------------------------------------------------


@dataclass
class CellFamily:
    """Cell data at blending nodes ``s_q`` for one side (``alpha`` or ``mu``).

    ``tensors[q]`` is the flux-form tensor ``mean(beta_q zeta_p)``, which
    coincides with the energy form at the solver tolerance.
    """

    model: CoefficientModel
    grid: CellGrid
    s_nodes: np.ndarray
    coefficients: list[MatrixField]
    correctors: list[CorrectorSet]
    tensors: np.ndarray
    tag: str

    @property
    def count(self) -> int:
        return self.s_nodes.size

    def weights(self, x_points: np.ndarray) -> np.ndarray:
        """``l_q(s(x))`` for points of shape ``S + (3,)``; returns ``(Q,) + S``."""
        return lagrange_weights(self.s_nodes, self.model.blend(x_points))

    def tensor_field(self, grid: PeriodicGrid) -> np.ndarray:
        """Interpolated ``Lambda(x)`` on ``grid``, shape ``(3, 3) + grid.shape``."""
        w = self.weights(np.moveaxis(grid.nodes(), 0, -1))
        return np.einsum("qxyz,qij->ijxyz", w, self.tensors)

    def tensor_at(self, s: float) -> np.ndarray:
        return np.einsum("q,qij->ij", lagrange_weights(self.s_nodes, np.asarray(s)), self.tensors)


def cell_family(
    model: CoefficientModel,
    grid: CellGrid,
    count: int = 13,
    cfg: CellSolveConfig = CellSolveConfig(cg_tolerance=1e-12),
    *,
    tag: str = "alpha",
) -> CellFamily:
    """Solve the cell problems at ``count`` Chebyshev-Lobatto blending nodes."""
    s_nodes = chebyshev_lobatto(count)
    coefs, corrs, tensors = [], [], []
    warm = None
    for s in s_nodes:
        beta = sample_cell(model, np.zeros(3), grid, s=float(s))
        corr = correctors(beta, cfg, tag=tag, warm_start=warm)
        warm = corr.potentials
        lam, _ = corr.effective("flux")
        coefs.append(beta)
        corrs.append(corr)
        tensors.append(lam)
    return CellFamily(model, grid, s_nodes, coefs, corrs, np.array(tensors), tag)


# ---------------------------------------------------------------------------
# Macro tensor fields
# ---------------------------------------------------------------------------


@dataclass
class EffectiveTensors:
    grid: MacroGrid
    lambda_u: MatrixField
    lambda_v: MatrixField
    method: str
    provenance: dict = field(default_factory=dict)
    family_u: CellFamily | None = None
    family_v: CellFamily | None = None

    def summary(self) -> dict:
        out = {"method": self.method}
        for name, lam in (("lambda_u", self.lambda_u), ("lambda_v", self.lambda_v)):
            ev = lam.eigenvalues()
            out[name] = {
                "min_eigenvalue": float(ev[..., 0].min()),
                "max_eigenvalue": float(ev[..., -1].max()),
                "max_asymmetry": lam.asymmetry(),
                "identity_defect_outside": float(
                    np.abs(lam.full()[..., self.grid.outside_mask()] - np.eye(3)[:, :, None]).max(initial=0.0)
                ),
            }
        out.update({k: v for k, v in self.provenance.items() if k != "per_value"})
        return out


def _nodal_tensor_field(model, macro: MacroGrid, cell: CellGrid, cfg, tag) -> tuple[np.ndarray, dict]:
    x = np.moveaxis(macro.nodes(), 0, -1)
    s = model.blend(x)
    out = np.zeros((3, 3) + macro.shape)
    out[...] = np.eye(3)[:, :, None, None, None]
    # Distinct blending values; exact keys keep the evaluation node-exact.
    keys, inverse = np.unique(s, return_inverse=True)
    inverse = inverse.reshape(macro.shape)
    per_value = []
    warm = None
    worst = {"asymmetry": 0.0, "residual": 0.0, "reuss_margin": np.inf, "voigt_margin": np.inf}
    for idx in np.argsort(keys):
        sv = float(keys[idx])
        if sv == 0.0 and model.identity_outside:
            continue
        mask = inverse == idx
        first = tuple(int(i) for i in np.argwhere(mask)[0])
        try:
            beta = sample_cell(model, x[first], cell)
            corr = correctors(beta, cfg, tag=tag, x=x[first], warm_start=warm)
        except Exception as exc:  # abort with the node position
            raise RuntimeError(f"cell solve failed at macro node {first} (x={x[first].tolist()}): {exc}") from exc
        warm = corr.potentials
        lam, asym = corr.effective("energy")
        harm, arith = voigt_reuss_bounds(beta)
        m_lo = float(np.linalg.eigvalsh(lam - harm)[0])
        m_hi = float(np.linalg.eigvalsh(arith - lam)[0])
        out[:, :, mask] = lam[:, :, None]
        worst["asymmetry"] = max(worst["asymmetry"], asym)
        worst["residual"] = max(worst["residual"], max(corr.residuals))
        worst["reuss_margin"] = min(worst["reuss_margin"], m_lo)
        worst["voigt_margin"] = min(worst["voigt_margin"], m_hi)
        per_value.append({"s": sv, "nodes": int(mask.sum()), "iterations": corr.iterations})
    worst["cell_solves"] = len(per_value)
    worst["per_value"] = per_value
    return out, worst


def effective_fields(
    model_alpha: CoefficientModel,
    model_mu: CoefficientModel,
    macro: MacroGrid,
    cell: CellGrid,
    cfg: CellSolveConfig = CellSolveConfig(cg_tolerance=1e-12),
    *,
    method: str = "nodes",
    blend_nodes: int = 13,
) -> EffectiveTensors:
    """Assemble ``Lambda^u(x)`` and ``Lambda^v(x)`` on the macro grid.

    Parameters
    ----------
    method : {"nodes", "blend"}
        See the module docstring.
    blend_nodes : int
        Number of Chebyshev-Lobatto nodes for ``method="blend"``.
    """
    for model in (model_alpha, model_mu):
        if abs(model.support_radius - macro.support_radius) > 1e-14:
            raise ValueError("macro support radius differs from the model support radius")
    if method == "nodes":
        lu, pu = _nodal_tensor_field(model_alpha, macro, cell, cfg, "alpha")
        lv, pv = _nodal_tensor_field(model_mu, macro, cell, cfg, "mu")
        prov = {"alpha": pu, "mu": pv}
        return EffectiveTensors(macro, MatrixField(macro, lu), MatrixField(macro, lv), "nodes", prov)
    if method != "blend":
        raise ValueError("method must be 'nodes' or 'blend'")
    fam_u = cell_family(model_alpha, cell, blend_nodes, cfg, tag="alpha")
    fam_v = cell_family(model_mu, cell, blend_nodes, cfg, tag="mu")
    return tensors_from_families(fam_u, fam_v, macro)


def tensors_from_families(fam_u: CellFamily, fam_v: CellFamily, macro: MacroGrid) -> EffectiveTensors:
    """Blend-interpolated tensors on ``macro`` from already solved cell families."""
    blend_nodes = fam_u.count
    lu = fam_u.tensor_field(macro)
    lv = fam_v.tensor_field(macro)
    lu = 0.5 * (lu + np.swapaxes(lu, 0, 1))
    lv = 0.5 * (lv + np.swapaxes(lv, 0, 1))
    prov = {
        "blend_nodes": blend_nodes,
        "alpha": {"residual": max(max(c.residuals) for c in fam_u.correctors)},
        "mu": {"residual": max(max(c.residuals) for c in fam_v.correctors)},
    }
    return EffectiveTensors(
        macro, MatrixField(macro, lu), MatrixField(macro, lv), "blend", prov, fam_u, fam_v
    )


# ---------------------------------------------------------------------------
# Two-scale sampling and the corrector multiplier
# ---------------------------------------------------------------------------


class TwoScaleSampler:
    """Evaluate cell tables at ``y = x / epsilon`` on the nodes of a fine grid.

    Evaluation is exact trigonometric interpolation, separable per axis;
    the cell lattice must be diagonal.
    """

    def __init__(self, cell: CellGrid, fine: MacroGrid, epsilon: float):
        basis = cell.lattice.basis
        if np.any(basis != np.diag(np.diag(basis))):
            raise ValueError("two-scale evaluation needs a diagonal cell lattice")
        self.cell = cell
        self.fine = fine
        self.epsilon = float(epsilon)
        self._matrices = []
        self._index = []
        for a in range(3):
            frac = fine.axis_coordinates(a) / self.epsilon / basis[a, a]
            frac = np.round(frac - np.floor(frac), 13) % 1.0
            uniq, idx = np.unique(frac, return_inverse=True)
            self._matrices.append(trig_interp_matrix(cell.shape[a], uniq))
            self._index.append(idx)

    def sample(self, table: np.ndarray) -> np.ndarray:
        """Table of shape ``(..., c1, c2, c3)`` -> values ``(..., f1, f2, f3)``."""
        e0, e1, e2 = self._matrices
        small = np.einsum("ai,...ijk->...ajk", e0, table)
        small = np.einsum("bj,...ajk->...abk", e1, small)
        small = np.einsum("ck,...abk->...abc", e2, small)
        i0, i1, i2 = self._index
        return small[..., i0[:, None, None], i1[None, :, None], i2[None, None, :]]


def check_resolution(fine: MacroGrid, epsilon: float, nodes_per_period: int = min_nodes_per_period) -> None:
    per_period = np.asarray(fine.shape) * epsilon / fine.side
    if np.any(per_period < nodes_per_period - 1e-9):
        need = int(np.ceil(nodes_per_period * fine.side / epsilon))
        raise ValueError(
            f"fine grid {fine.shape} under-resolves epsilon={epsilon:g}: "
            f"need at least {need} nodes per axis ({nodes_per_period} per period)"
        )


@dataclass
class ThetaMultiplier:
    grid: MacroGrid
    block_u: MatrixField
    block_v: MatrixField
    epsilon: float

    def apply(self, hat_u: np.ndarray, hat_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _apply_blocks(self.block_u, hat_u), _apply_blocks(self.block_v, hat_v)


def _apply_blocks(block: MatrixField, vec: np.ndarray) -> np.ndarray:
    return np.einsum("ijxyz,...jxyz->...ixyz", block.values, vec)


def theta_multiplier(
    model_alpha: CoefficientModel,
    model_mu: CoefficientModel,
    tensors: EffectiveTensors,
    epsilon: float,
    fine: MacroGrid,
    *,
    nodes_per_period: int = min_nodes_per_period,
) -> ThetaMultiplier:
    """Blocks ``beta(x, x/eps) Z(x, x/eps) Lambda(x)^{-1}`` on the fine grid.

    Requires blending-node families (``tensors.method == "blend"``);
    correctors and ``Lambda`` are interpolated in the blending variable.
    """
    check_resolution(fine, epsilon, nodes_per_period)
    if tensors.family_u is None or tensors.family_v is None:
        raise ValueError("theta_multiplier needs tensors built with method='blend'")
    sampler = TwoScaleSampler(tensors.family_u.grid, fine, epsilon)
    blocks = [
        MatrixField(fine, _theta_block(model, family, fine, sampler, epsilon), check=False)
        for model, family in ((model_alpha, tensors.family_u), (model_mu, tensors.family_v))
    ]
    return ThetaMultiplier(fine, blocks[0], blocks[1], float(epsilon))


def _theta_block(model, family: CellFamily, fine: MacroGrid, sampler: TwoScaleSampler, epsilon) -> np.ndarray:
    """``beta(x, x/eps) sum_q l_q Z_q(x/eps) Lambda(x)^{-1}`` with exact ``beta``."""
    x = np.moveaxis(fine.nodes(), 0, -1)
    w = family.weights(x)
    zsum = np.zeros((3, 3) + fine.shape)
    for q in range(family.count):
        if not np.any(w[q]):
            continue
        zq = sampler.sample(family.correctors[q].fields)  # (k, c, fine)
        zsum += w[q] * np.swapaxes(zq, 0, 1)  # Z[c, k]
    lam = np.einsum("qxyz,qij->xyzij", w, family.tensors)
    lam_inv = np.linalg.inv(0.5 * (lam + np.swapaxes(lam, -1, -2)))
    frac = model.lattice.fractional(x / epsilon)
    beta = model.pattern_values(model.blend(x), frac)
    if model.isotropic:
        bz = beta * zsum
    else:
        bz = np.einsum("xyzic,ckxyz->ikxyz", beta, zsum)
    return np.einsum("ikxyz,xyzkj->ijxyz", bz, lam_inv)

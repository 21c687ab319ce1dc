"""Two-scale asymptotic expansion of the Maxwell resolvent.

Every two-scale quantity ``w(x, y)`` is kept in separated form

    w(x, y) = sum_t C_t(x) T_t(y) + m(x),

with macro coefficient fields ``C_t`` on the macro grid, cell tables
``T_t`` on the cell grid and a ``y``-independent part ``m``.  Each term
carries a tag ``q``: the blending node whose cell operator acts on its
table.  Because the built-in models depend on ``x`` only through a blending
scalar ``s(x)``, the corrector parts read

    alpha zeta_p a_p  ~  sum_q l_q(s(x)) a_p(x) (alpha_q zeta_{p,q})(y),

and all ``x``-derivatives act on coefficient fields through the macro grid
derivative symbol while ``y``-operations act on the tables.  The order-n
recurrence is then linear algebra over terms, which keeps the solvability
conditions of the next order satisfied to solver tolerance.

Order ``n + 1`` cell systems (``delta`` is the Kronecker symbol)::

    rot_y(mu^{-1} v_{n+1})    = -i f_u delta_{n0} - i E u_n - rot_x(mu^{-1} v_n)
    div_y v_{n+1}             = -div_x v_n
    rot_y(alpha^{-1} u_{n+1}) =  i f_v delta_{n0} + i E v_n - rot_x(alpha^{-1} u_n)
    div_y u_{n+1}             = -div_x u_n

and the hats ``(u^_n, v^_n) = (Lambda^u a^n, Lambda^v b^n)`` solve the
homogenized resolvent equation with right-hand side::

    H_u = f_u delta_{n0} + E <u~_n> - i rot <mu^{-1} v~_n>
    H_v = f_v delta_{n0} + E <v~_n> + i rot <alpha^{-1} u~_n>

where ``<.>`` is the cell mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad_vec

from .cell import CellSolveConfig, solve_curl_div
from .effective import CellFamily, EffectiveTensors, TwoScaleSampler, check_resolution
from .fields import (
    CellGrid,
    FieldPair,
    MacroGrid,
    curl,
    divergence,
    fourier_resample,
    l2_norm,
    sobolev_norm,
    trig_interp_matrix,
)
from .maxwell import MaxwellOperator, resolvent_solve

__all__ = [
    "SeparatedField",
    "ExpansionTerm",
    "Expansion",
    "DeltaCorrector",
    "PartialSum",
    "leading_term",
    "recurrence_step",
    "divergence_fixer",
    "partial_sum",
    "estimate_error",
    "term_norm_diagnostics",
    "bump_source",
]

_AXES = (-3, -2, -1)


# ---------------------------------------------------------------------------
# Separated two-scale fields
# ---------------------------------------------------------------------------


def _macro_derivatives(coefs: np.ndarray, grid: MacroGrid) -> list[np.ndarray]:
    """``[D_1 C, D_2 C, D_3 C]`` for a batch of complex macro fields."""
    hat = sfft.fftn(coefs, axes=_AXES)
    k = grid.wavevector(half=False)
    return [sfft.ifftn(1j * k[j] * hat, axes=_AXES) for j in range(3)]


def _cross_unit(j: int, tables: np.ndarray) -> np.ndarray:
    """``e_j x T`` for vector tables of shape ``(T, 3, ...)``."""
    out = np.zeros_like(tables)
    a, b = (j + 1) % 3, (j + 2) % 3
    out[:, a] = -tables[:, b]
    out[:, b] = tables[:, a]
    return out


@dataclass
class SeparatedField:
    """``sum_t coefs[t](x) tables[t](y) + offset(x)`` with per-term blending tags.

    ``tables`` has shape ``(T, 3) + cell.shape`` for vector fields and
    ``(T,) + cell.shape`` for scalar ones; ``coefs`` is ``(T,) + macro.shape``.
    """

    macro: MacroGrid
    cell: CellGrid
    vector: bool
    tags: np.ndarray
    coefs: np.ndarray
    tables: np.ndarray
    offset: np.ndarray | None = None

    @classmethod
    def zeros(cls, macro: MacroGrid, cell: CellGrid, vector: bool = True) -> "SeparatedField":
        tshape = ((0, 3) if vector else (0,)) + cell.shape
        return cls(
            macro, cell, vector, np.zeros(0, dtype=int), np.zeros((0,) + macro.shape, dtype=complex), np.zeros(tshape)
        )

    @classmethod
    def constant(cls, macro: MacroGrid, cell: CellGrid, offset: np.ndarray) -> "SeparatedField":
        out = cls.zeros(macro, cell, vector=offset.ndim == 4)
        out.offset = np.asarray(offset, dtype=complex)
        return out

    def __len__(self) -> int:
        return int(self.tags.size)

    def scaled(self, factor: complex) -> "SeparatedField":
        return SeparatedField(
            self.macro,
            self.cell,
            self.vector,
            self.tags,
            self.coefs * factor,
            self.tables,
            None if self.offset is None else self.offset * factor,
        )

    def __add__(self, other: "SeparatedField") -> "SeparatedField":
        if self.vector != other.vector:
            raise ValueError("cannot add scalar and vector separated fields")
        if self.offset is None:
            offset = other.offset
        elif other.offset is None:
            offset = self.offset
        else:
            offset = self.offset + other.offset
        return SeparatedField(
            self.macro,
            self.cell,
            self.vector,
            np.concatenate([self.tags, other.tags]),
            np.concatenate([self.coefs, other.coefs]),
            np.concatenate([self.tables, other.tables]),
            offset,
        )

    def __neg__(self) -> "SeparatedField":
        return self.scaled(-1.0)

    def __sub__(self, other: "SeparatedField") -> "SeparatedField":
        return self + (-other)

    def table_means(self) -> np.ndarray:
        return np.mean(self.tables, axis=_AXES)

    def mean(self) -> np.ndarray:
        """Cell mean as a macro field."""
        means = self.table_means()
        if self.vector:
            out = np.einsum("txyz,tc->cxyz", self.coefs, means) if len(self) else np.zeros((3,) + self.macro.shape, complex)
        else:
            out = np.einsum("txyz,t->xyz", self.coefs, means) if len(self) else np.zeros(self.macro.shape, complex)
        if self.offset is not None:
            out = out + self.offset
        return out

    def rot_x(self) -> "SeparatedField":
        if not self.vector:
            raise ValueError("rot_x needs a vector field")
        parts = []
        if len(self):
            derivs = _macro_derivatives(self.coefs, self.macro)
            for j in range(3):
                parts.append(
                    SeparatedField(self.macro, self.cell, True, self.tags, derivs[j], _cross_unit(j, self.tables))
                )
        out = SeparatedField.zeros(self.macro, self.cell, True)
        for p in parts:
            out = out + p
        if self.offset is not None:
            out.offset = curl(self.offset, self.macro)
        return out

    def div_x(self) -> "SeparatedField":
        if not self.vector:
            raise ValueError("div_x needs a vector field")
        out = SeparatedField.zeros(self.macro, self.cell, False)
        if len(self):
            derivs = _macro_derivatives(self.coefs, self.macro)
            for j in range(3):
                out = out + SeparatedField(self.macro, self.cell, False, self.tags, derivs[j], self.tables[:, j])
        if self.offset is not None:
            out.offset = divergence(self.offset, self.macro)
        return out

    def map_tables(self, fn) -> "SeparatedField":
        """Apply ``fn(tag, table)`` to every table (offset dropped)."""
        tables = np.stack([fn(int(q), t) for q, t in zip(self.tags, self.tables)]) if len(self) else self.tables
        return SeparatedField(self.macro, self.cell, self.vector, self.tags, self.coefs, tables)

    def coefficient_bound(self, mask: np.ndarray) -> float:
        """Upper bound of ``max |w(x, .)|`` over macro nodes in ``mask``."""
        bound = np.zeros(int(mask.sum()))
        if len(self):
            tmax = np.abs(self.tables).reshape(len(self), -1).max(axis=1)
            bound = np.einsum("tn,t->n", np.abs(self.coefs[:, mask]), tmax)
        if self.offset is not None:
            off = np.abs(self.offset)
            off = off.max(axis=0) if self.vector else off
            bound = bound + off[mask]
        return float(bound.max(initial=0.0))

    def cell_values(self, index) -> np.ndarray:
        """The cell field ``w(x_index, .)`` at one macro node."""
        c = self.coefs[(slice(None),) + tuple(index)]
        out = np.tensordot(c, self.tables, axes=(0, 0)) if len(self) else 0.0
        if self.offset is not None:
            off = self.offset[(slice(None),) + tuple(index)] if self.vector else self.offset[tuple(index)]
            out = out + (off[:, None, None, None] if self.vector else off)
        return np.broadcast_to(out, ((3,) if self.vector else ()) + self.cell.shape).astype(complex)

    def evaluate(self, sampler: TwoScaleSampler) -> np.ndarray:
        """Values at ``(x, x/eps)`` on the sampler's fine grid."""
        fine = sampler.fine
        shape = ((3,) if self.vector else ()) + fine.shape
        out = np.zeros(shape, dtype=complex)
        for c, t in zip(self.coefs, self.tables):
            if not np.any(c):
                continue
            out += fourier_resample(c, self.macro, fine.shape) * sampler.sample(t)
        if self.offset is not None:
            out += fourier_resample(self.offset, self.macro, fine.shape)
        return out


# ---------------------------------------------------------------------------
# Expansion terms
# ---------------------------------------------------------------------------


@dataclass
class ExpansionTerm:
    """Order-``n`` term ``u_n = alpha sum_p a_p zeta_p + u~_n`` (and the ``v`` analogue)."""

    n: int
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    hat_u: np.ndarray
    hat_v: np.ndarray
    tilde_u: SeparatedField
    tilde_v: SeparatedField
    diagnostics: dict = field(default_factory=dict)
    source: FieldPair | None = None

    @property
    def support_flag(self) -> bool:
        return self.diagnostics.get("tilde_outside", 0.0) <= 1e-10


class Expansion:
    """Shared context of an expansion: blending families, macro grid, ``E`` and tolerances.

    Parameters
    ----------
    tensors : EffectiveTensors
        Built with ``method="blend"``; provides both cell families.
    E : complex
        Spectral parameter (``Im E > 0``).
    hat_tolerance : float
        Relative residual of the homogenized resolvent solves.
    cell_config : CellSolveConfig
        Tolerances of the order-n cell solves.
    """

    def __init__(
        self,
        tensors: EffectiveTensors,
        E: complex = 1j,
        *,
        hat_tolerance: float = 1e-12,
        cell_config: CellSolveConfig = CellSolveConfig(cg_tolerance=1e-12),
    ):
        if tensors.family_u is None or tensors.family_v is None:
            raise ValueError("the expansion needs tensors built with method='blend'")
        self.tensors = tensors
        self.macro = tensors.grid
        self.fam_u: CellFamily = tensors.family_u
        self.fam_v: CellFamily = tensors.family_v
        self.cell = self.fam_u.grid
        self.fam_v.grid.require_same(self.cell)
        self.E = complex(E)
        self.hat_tolerance = hat_tolerance
        self.cell_config = cell_config
        self.operator = MaxwellOperator.homogenized(tensors)
        x = np.moveaxis(self.macro.nodes(), 0, -1)
        self.weights_u = self.fam_u.weights(x)
        self.weights_v = self.fam_v.weights(x)
        self.shared_blend = bool(
            np.array_equal(self.fam_u.s_nodes, self.fam_v.s_nodes) and np.array_equal(self.weights_u, self.weights_v)
        )
        self._flux_u = np.stack([c.fluxes() for c in self.fam_u.correctors])  # (Q, p, c, cell)
        self._flux_v = np.stack([c.fluxes() for c in self.fam_v.correctors])
        self._zeta_u = np.stack([c.fields for c in self.fam_u.correctors])
        self._zeta_v = np.stack([c.fields for c in self.fam_v.correctors])

    # -- building blocks ------------------------------------------------------
    def _corrector_part(self, coeffs: np.ndarray, weights: np.ndarray, tables: np.ndarray) -> SeparatedField:
        """``sum_q sum_p l_q(x) c_p(x) tables[q, p](y)``."""
        Q = weights.shape[0]
        tags = np.repeat(np.arange(Q), 3)
        coefs = (weights[:, None] * coeffs[None, :]).reshape((3 * Q,) + self.macro.shape)
        return SeparatedField(self.macro, self.cell, True, tags, coefs.astype(complex), tables.reshape((3 * Q, 3) + self.cell.shape))

    def u_field(self, term: ExpansionTerm) -> SeparatedField:
        return self._corrector_part(term.a_coeffs, self.weights_u, self._flux_u) + term.tilde_u

    def v_field(self, term: ExpansionTerm) -> SeparatedField:
        return self._corrector_part(term.b_coeffs, self.weights_v, self._flux_v) + term.tilde_v

    def alpha_inv_u(self, term: ExpansionTerm) -> SeparatedField:
        tilde = term.tilde_u.map_tables(lambda q, t: self.fam_u.coefficients[q].inverse.apply(t))
        return self._corrector_part(term.a_coeffs, self.weights_u, self._zeta_u) + tilde

    def mu_inv_v(self, term: ExpansionTerm) -> SeparatedField:
        tilde = term.tilde_v.map_tables(lambda q, t: self.fam_v.coefficients[q].inverse.apply(t))
        return self._corrector_part(term.b_coeffs, self.weights_v, self._zeta_v) + tilde

    def _solve_tilde(self, curl_data: SeparatedField, div_data: SeparatedField, family: CellFamily) -> SeparatedField:
        if not self.shared_blend:
            raise ValueError("orders n >= 1 need alpha and mu models with one shared blending function")
        out_tags, out_coefs, out_tables = [], [], []
        zero_scalar = np.zeros(self.cell.shape)
        zero_vector = np.zeros((3,) + self.cell.shape)
        for data, is_curl in ((curl_data, True), (div_data, False)):
            for q, c, t in zip(data.tags, data.coefs, data.tables):
                if not np.any(c):
                    continue
                spread = np.abs(t - np.mean(t, axis=_AXES, keepdims=True)).max()
                if spread <= 1e-14 * max(1.0, float(np.abs(t).max())):
                    continue  # constant data are removed by the solvability projection
                F, G = (t, zero_scalar) if is_curl else (zero_vector, t)
                sol = solve_curl_div(family.coefficients[q], F, G, family.correctors[q], self.cell_config, check=False)
                out_tags.append(int(q))
                out_coefs.append(c)
                out_tables.append(sol.w.real)
        if not out_tags:
            return SeparatedField.zeros(self.macro, self.cell, True)
        return SeparatedField(
            self.macro, self.cell, True, np.array(out_tags), np.stack(out_coefs), np.stack(out_tables)
        )

    def compatibility(self, curl_data: SeparatedField, div_data: SeparatedField, family: CellFamily) -> dict:
        """Solvability residuals ``|int (F, xi_k)|`` and ``|int G|`` at every macro node.

        Correctors are interpolated in the blending variable.  Returns the
        nodal residual fields (shape ``(4,) + macro.shape``) and their maxima.
        """
        vol = self.cell.volume
        weights = family.weights(np.moveaxis(self.macro.nodes(), 0, -1))
        corr = np.stack([c.fields for c in family.correctors])  # (Q, k, c, cell)
        res = np.zeros((4,) + self.macro.shape, dtype=complex)
        if len(curl_data):
            pair = np.einsum(
                "tn,qkn->tqk",
                curl_data.tables.reshape(len(curl_data), -1),
                corr.reshape(corr.shape[0], 3, -1),
            ) * self.cell.node_volume
            partial = np.einsum("txyz,tqk->qkxyz", curl_data.coefs, pair)
            res[:3] = np.einsum("qxyz,qkxyz->kxyz", weights, partial)
        if curl_data.offset is not None:
            res[:3] += vol * curl_data.offset
        res[3] = vol * div_data.mean()
        mags = np.abs(res)
        return {"fields": mags, "max": [float(m.max()) for m in mags]}

    def _cell_data(self, term: ExpansionTerm, f: FieldPair | None):
        """Right-hand sides of the order ``term.n + 1`` cell systems."""
        E = self.E
        u, v = self.u_field(term), self.v_field(term)
        curl_v = u.scaled(-1j * E) - self.mu_inv_v(term).rot_x()
        curl_u = v.scaled(1j * E) - self.alpha_inv_u(term).rot_x()
        if term.n == 0 and f is not None:
            curl_v = curl_v + SeparatedField.constant(self.macro, self.cell, -1j * f.u)
            curl_u = curl_u + SeparatedField.constant(self.macro, self.cell, 1j * f.v)
        div_v = v.div_x().scaled(-1.0)
        div_u = u.div_x().scaled(-1.0)
        return curl_u, div_u, curl_v, div_v

    def next_compatibility(self, term: ExpansionTerm, f: FieldPair | None = None) -> dict:
        """Solvability residuals of the order ``term.n + 1`` cell systems."""
        curl_u, div_u, curl_v, div_v = self._cell_data(term, f)
        cu = self.compatibility(curl_u, div_u, self.fam_u)
        cv = self.compatibility(curl_v, div_v, self.fam_v)
        return {
            "u_system": cu["max"],
            "v_system": cv["max"],
            "max": float(max(cu["max"] + cv["max"])),
        }

    def _solve_hats(self, rhs_u: np.ndarray, rhs_v: np.ndarray):
        sol = resolvent_solve(
            self.operator, FieldPair(rhs_u, rhs_v, self.macro), self.E, self.hat_tolerance, project=False
        )
        hat_u, hat_v = sol.state.u, sol.state.v
        a = self.tensors.lambda_u.inverse.apply(hat_u)
        b = self.tensors.lambda_v.inverse.apply(hat_v)
        return a, b, hat_u, hat_v, sol

    # -- public steps -----------------------------------------------------------
    def leading_term(self, f: FieldPair) -> ExpansionTerm:
        """Order 0: hats from the homogenized resolvent, zero tildes."""
        self.macro.require_same(f.grid)
        f = f.projected()
        a, b, hu, hv, sol = self._solve_hats(f.u, f.v)
        zero = SeparatedField.zeros(self.macro, self.cell, True)
        diag = {"hat_residual": sol.residual, "hat_iterations": sol.iterations, "tilde_outside": 0.0}
        return ExpansionTerm(0, a, b, hu, hv, zero, zero, diag, source=f)

    def recurrence_step(self, terms: list[ExpansionTerm], *, close: bool = True) -> ExpansionTerm:
        """Order ``n = len(terms)`` from the lower terms.

        ``close=False`` applies the truncation ``u^_n = v^_n = 0``.
        """
        prev = terms[-1]
        n = prev.n + 1
        f = prev.source if prev.n == 0 else None
        curl_u, div_u, curl_v, div_v = self._cell_data(prev, f)
        compat_u = self.compatibility(curl_u, div_u, self.fam_u)["max"]
        compat_v = self.compatibility(curl_v, div_v, self.fam_v)["max"]
        tilde_u = self._solve_tilde(curl_u, div_u, self.fam_u)
        tilde_v = self._solve_tilde(curl_v, div_v, self.fam_v)
        outside = self.macro.outside_mask()
        diag = {
            "compatibility_u": compat_u,
            "compatibility_v": compat_v,
            "tilde_outside": max(tilde_u.coefficient_bound(outside), tilde_v.coefficient_bound(outside)),
            "tilde_terms": (len(tilde_u), len(tilde_v)),
        }
        zeros = np.zeros((3,) + self.macro.shape, dtype=complex)
        if close:
            E = self.E
            mean_u, mean_v = tilde_u.mean(), tilde_v.mean()
            probe = ExpansionTerm(n, zeros, zeros, zeros, zeros, tilde_u, tilde_v)
            mu_inv_mean = self.mu_inv_v(probe).mean()
            alpha_inv_mean = self.alpha_inv_u(probe).mean()
            rhs_u = E * mean_u - 1j * curl(mu_inv_mean, self.macro)
            rhs_v = E * mean_v + 1j * curl(alpha_inv_mean, self.macro)
            a, b, hu, hv, sol = self._solve_hats(rhs_u, rhs_v)
            diag.update(hat_residual=sol.residual, hat_iterations=sol.iterations)
            diag["hat_divergence_consistency"] = max(
                l2_norm(divergence(hu + mean_u, self.macro), self.macro),
                l2_norm(divergence(hv + mean_v, self.macro), self.macro),
            )
        else:
            a = b = hu = hv = zeros
        return ExpansionTerm(n, a, b, hu, hv, tilde_u, tilde_v, diag)

    def evaluate_term(self, term: ExpansionTerm, sampler: TwoScaleSampler) -> FieldPair:
        """``(u_n(x, x/eps), v_n(x, x/eps))`` on the sampler's fine grid."""
        return FieldPair(self.u_field(term).evaluate(sampler), self.v_field(term).evaluate(sampler), sampler.fine)


def leading_term(expansion: Expansion, f: FieldPair) -> ExpansionTerm:
    return expansion.leading_term(f)


def recurrence_step(expansion: Expansion, terms: list[ExpansionTerm], *, close: bool = True) -> ExpansionTerm:
    return expansion.recurrence_step(terms, close=close)


# ---------------------------------------------------------------------------
# Divergence fixer
# ---------------------------------------------------------------------------


@dataclass
class DeltaCorrector:
    delta: np.ndarray
    source: np.ndarray
    grid: MacroGrid
    divergence_defect: float
    h1_ratio: float
    h1_bound: float
    quadrature_error: float

    @property
    def within_bound(self) -> bool:
        return self.h1_ratio <= self.h1_bound


def _scaled_sampler(g: np.ndarray, grid: MacroGrid):
    """``t -> g(t x)`` at every node by exact separable trigonometric interpolation."""
    coords = [grid.axis_coordinates(a) for a in range(3)]
    origin = grid.origin

    def at(t: float) -> np.ndarray:
        mats = [trig_interp_matrix(grid.shape[a], (t * coords[a] - origin[a]) / grid.side) for a in range(3)]
        out = np.einsum("ai,...ijk->...ajk", mats[0], g)
        out = np.einsum("bj,...ajk->...abk", mats[1], out)
        return np.einsum("ck,...abk->...abc", mats[2], out)

    return at


def divergence_fixer(
    g,
    grid: MacroGrid,
    *,
    check_support: bool = True,
    epsrel: float = 1e-10,
    support_tolerance: float = 1e-10,
) -> DeltaCorrector:
    """``delta(x) = x int_0^1 g(t x) t^2 dt`` by adaptive Gauss-Kronrod quadrature.

    Parameters
    ----------
    g : ndarray or callable
        Scalar field on ``grid`` (evaluated off-grid by trigonometric
        interpolation) or a function of points of shape ``(3, ...)``.
    check_support : bool
        Refuse sources with ``max |g|`` above ``support_tolerance`` outside
        the support ball.

    Returns
    -------
    DeltaCorrector
        ``delta``, the spectral divergence defect ``||div delta - g|| / ||g||``,
        the ratio ``||delta||_{H^1} / ||g||_{H^1}`` and the bound
        ``sqrt(2 R^2 + 6)``.
    """
    X = grid.nodes()
    if callable(g):
        values = np.asarray(g(X))
        at = lambda t: np.asarray(g(t * X))  # noqa: E731
    else:
        values = np.asarray(g)
        at = _scaled_sampler(values, grid)
    if check_support:
        outside = np.abs(values[grid.outside_mask()]).max(initial=0.0)
        if outside > support_tolerance * max(1.0, float(np.abs(values).max())):
            raise ValueError(f"source is not supported in the ball: max |g| outside = {outside:.3e}")
    complex_src = np.iscomplexobj(values)
    peak = float(np.abs(values).max(initial=0.0))
    bound = float(np.sqrt(2.0 * grid.support_radius**2 + 6.0))
    if peak == 0.0:
        return DeltaCorrector(np.zeros((3,) + grid.shape, dtype=values.dtype), values, grid, 0.0, 0.0, bound, 0.0)

    def integrand(t: float) -> np.ndarray:
        v = at(t) * t * t
        return np.concatenate([v.real.ravel(), v.imag.ravel()]) if complex_src else v.ravel()

    integral, err = quad_vec(integrand, 0.0, 1.0, epsrel=epsrel, epsabs=1e-15 * peak, norm="max", quadrature="gk21")
    if complex_src:
        half = integral.size // 2
        integral = integral[:half] + 1j * integral[half:]
    delta = X * integral.reshape(grid.shape)
    gnorm = l2_norm(values, grid)
    div_defect = l2_norm(divergence(delta, grid) - values, grid) / gnorm if gnorm > 0 else 0.0
    g_h1 = sobolev_norm(values, grid, 1)
    ratio = sobolev_norm(delta, grid, 1) / g_h1 if g_h1 > 0 else 0.0
    return DeltaCorrector(delta, values, grid, float(div_defect), float(ratio), bound, float(err))


def bump_source(grid: MacroGrid, degree: int = 1, *, width: float | None = None, coefficients=None):
    """Source with a closed-form fixer: ``g = P (l + 3 - r^2/w^2) exp(-r^2 / 2w^2)``.

    ``P`` is a homogeneous polynomial of degree ``l`` (``coefficients`` of
    ``x^i y^j z^k`` with ``i + j + k = l``; random-free defaults).  Then
    ``div(x P exp(-r^2/2w^2)) = g``, so the ray integral has the closed form
    ``delta = x P exp(-r^2/2w^2)``.  Returns ``(g, delta)`` on ``grid``.
    """
    width = grid.support_radius / 7.5 if width is None else width
    X = grid.nodes()
    monomials = [(i, j, degree - i - j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    if coefficients is None:
        coefficients = [1.0 / (1 + m) for m in range(len(monomials))]
    P = sum(c * X[0] ** i * X[1] ** j * X[2] ** k for c, (i, j, k) in zip(coefficients, monomials))
    r2 = np.sum(X**2, axis=0)
    gauss = np.exp(-r2 / (2 * width**2))
    return P * (degree + 3 - r2 / width**2) * gauss, X * P * gauss


# ---------------------------------------------------------------------------
# Partial sums and errors
# ---------------------------------------------------------------------------


@dataclass
class PartialSum:
    order: int
    epsilon: float
    grid: MacroGrid
    contributions: list[FieldPair]
    delta: FieldPair | None
    divergence_before: tuple[float, float]
    divergence_after: tuple[float, float]

    def total(self, through_order: int | None = None, include_delta: bool = True) -> FieldPair:
        last = self.order if through_order is None else through_order
        acc = FieldPair.zeros(self.grid)
        for c in self.contributions[: last + 1]:
            acc = acc + c
        if include_delta and self.delta is not None and through_order is None:
            acc = acc + self.delta
        return acc


def partial_sum(
    expansion: Expansion,
    terms: list[ExpansionTerm],
    epsilon: float,
    fine: MacroGrid,
    *,
    fix_divergence: bool = True,
    nodes_per_period: int = 8,
) -> PartialSum:
    """``sum_n eps^n (u_n, v_n)(x, x/eps) + eps^N delta`` on the fine grid.

    ``N`` is the last order in ``terms``.  When ``fix_divergence`` is set the
    divergence of the sum is removed by :func:`divergence_fixer` applied to
    ``-eps^{-N} div(sum)``.
    """
    check_resolution(fine, epsilon, nodes_per_period)
    sampler = TwoScaleSampler(expansion.cell, fine, epsilon)
    contributions = [expansion.evaluate_term(t, sampler) * (epsilon**t.n) for t in terms]
    acc = FieldPair.zeros(fine)
    for c in contributions:
        acc = acc + c
    div_before = (l2_norm(divergence(acc.u, fine), fine), l2_norm(divergence(acc.v, fine), fine))
    order = terms[-1].n
    delta = None
    div_after = div_before
    if fix_divergence:
        scale = epsilon**order
        gu = -divergence(acc.u, fine) / scale
        gv = -divergence(acc.v, fine) / scale
        du = divergence_fixer(gu, fine, check_support=False).delta
        dv = divergence_fixer(gv, fine, check_support=False).delta
        delta = FieldPair(du * scale, dv * scale, fine)
        fixed = acc + delta
        div_after = (l2_norm(divergence(fixed.u, fine), fine), l2_norm(divergence(fixed.v, fine), fine))
    return PartialSum(order, float(epsilon), fine, contributions, delta, div_before, div_after)


def leading_order_fields(expansion: Expansion, term: ExpansionTerm, epsilon: float, fine: MacroGrid,
                         nodes_per_period: int = 8) -> FieldPair:
    """``(u_0, v_0)(x, x/eps) = Theta(eps) (u^_0, v^_0)`` on the fine grid."""
    check_resolution(fine, epsilon, nodes_per_period)
    sampler = TwoScaleSampler(expansion.cell, fine, epsilon)
    return expansion.evaluate_term(term, sampler)


def estimate_error(fine_solution: FieldPair, approximation, through_order: int | None = None) -> float:
    """L2 norm of ``fine_solution - sum_{n <= through_order} eps^n (u_n, v_n)``.

    ``approximation`` is a :class:`PartialSum` or an already summed
    :class:`FieldPair` (then ``through_order`` is ignored).
    """
    if isinstance(approximation, PartialSum):
        last = approximation.order if through_order is None else through_order
        approx = approximation.total(last, include_delta=False)
    else:
        approx = approximation
    fine_solution.grid.require_same(approx.grid)
    return (fine_solution - approx).l2_norm()


def term_norm_diagnostics(expansion: Expansion, terms: list[ExpansionTerm], s: int = 2) -> list[dict]:
    """Discrete norms of each term: hats in ``H^{s-n+1}`` and tildes in ``L^2``.

    Tilde norms are ``(int int |w(x, y)|^2 dy dx)^{1/2}`` evaluated exactly
    from the separated form.
    """
    if s < max(t.n for t in terms) - 1:
        raise ValueError("Sobolev index too small for the highest order")
    macro = expansion.macro
    rows = []
    for t in terms:
        order = max(s - t.n + 1, 0)
        row = {
            "n": t.n,
            "sobolev_order": order,
            "a_norm": sobolev_norm(t.a_coeffs, macro, order),
            "b_norm": sobolev_norm(t.b_coeffs, macro, order),
            "hat_u_norm": sobolev_norm(t.hat_u, macro, order),
            "hat_v_norm": sobolev_norm(t.hat_v, macro, order),
        }
        for name, w in (("tilde_u_norm", t.tilde_u), ("tilde_v_norm", t.tilde_v)):
            if len(w) == 0:
                row[name] = 0.0
                continue
            flat = w.tables.reshape(len(w), -1)
            gram = (flat @ flat.T) * expansion.cell.node_volume
            c = w.coefs.reshape(len(w), -1)
            quad = np.einsum("tn,ts,sn->n", np.conj(c), gram, c).real
            row[name] = float(np.sqrt(max(np.sum(quad), 0.0) * macro.node_volume))
        rows.append(row)
    return rows

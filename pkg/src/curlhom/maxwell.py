"""Fine and homogenized Maxwell operators and their resolvents.

The operator acts on pairs ``(u, v)`` by ``(i rot(mu^{-1} v), -i rot(alpha^{-1} u))``
and is self-adjoint in the weighted product
``int (alpha^{-1} u1, u2) + (mu^{-1} v1, v2) dx``.

The resolvent ``(M - E)^{-1}`` is computed through the second-order form in
``e = alpha^{-1} u``::

    rot(mu^{-1} rot e) - E^2 alpha e = E f_u + i rot(mu^{-1} f_v),
    u = alpha e,   v = (-i rot e - f_v) / E.

For purely imaginary ``E`` the operator is real symmetric positive definite
and preconditioned CG runs in real arithmetic; otherwise it is complex
symmetric and COCG is used.  The preconditioner is the exact inverse of the
constant-coefficient operator, mode by mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .coefficients import CoefficientModel, sample_on_grid
from .effective import EffectiveTensors, check_resolution, min_nodes_per_period
from .fields import FieldPair, MacroGrid, MatrixField, curl, divergence, l2_norm, leray_project, weighted_inner
from .linalg import cocg, pcg

__all__ = [
    "SpectralShift",
    "MaxwellOperator",
    "ResolventSolution",
    "ResolventError",
    "apply",
    "resolvent_solve",
    "selfadjointness_defect",
    "random_solenoidal_pair",
]

_AXES = (-3, -2, -1)


class ResolventError(RuntimeError):
    """The resolvent Krylov iteration did not reach the requested tolerance."""


@dataclass(frozen=True)
class SpectralShift:
    value: complex = 1j

    def __post_init__(self):
        if not complex(self.value).imag > 0:
            raise ValueError(f"spectral parameter must satisfy Im E > 0, got {self.value}")

    @classmethod
    def coerce(cls, E) -> "SpectralShift":
        return E if isinstance(E, SpectralShift) else cls(complex(E))


@dataclass
class MaxwellOperator:
    """Block Maxwell operator on a periodic macro box.

    Use :meth:`fine`, :meth:`homogenized` or :meth:`identity` to build one.
    """

    grid: MacroGrid
    alpha: MatrixField
    mu: MatrixField
    kind: str = "fine"
    epsilon: float | None = None

    def __post_init__(self):
        self.grid.require_same(self.alpha.grid)
        self.grid.require_same(self.mu.grid)

    @property
    def alpha_inv(self) -> MatrixField:
        return self.alpha.inverse

    @property
    def mu_inv(self) -> MatrixField:
        return self.mu.inverse

    @classmethod
    def identity(cls, grid: MacroGrid) -> "MaxwellOperator":
        return cls(grid, MatrixField.identity(grid), MatrixField.identity(grid), "identity")

    @classmethod
    def fine(
        cls,
        model_alpha: CoefficientModel,
        model_mu: CoefficientModel,
        grid: MacroGrid,
        epsilon: float,
        *,
        nodes_per_period: int = min_nodes_per_period,
    ) -> "MaxwellOperator":
        """Operator with coefficients ``alpha(x, x/eps)``, ``mu(x, x/eps)``."""
        if not 0.0 < epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        check_resolution(grid, epsilon, nodes_per_period)
        alpha = sample_on_grid(model_alpha, grid, epsilon)
        mu = sample_on_grid(model_mu, grid, epsilon)
        return cls(grid, alpha, mu, "fine", float(epsilon))

    @classmethod
    def homogenized(cls, tensors: EffectiveTensors) -> "MaxwellOperator":
        return cls(tensors.grid, tensors.lambda_u, tensors.lambda_v, "homogenized")


def apply(op: MaxwellOperator, state: FieldPair) -> FieldPair:
    """``(i rot(mu^{-1} v), -i rot(alpha^{-1} u))``."""
    op.grid.require_same(state.grid)
    g = op.grid
    return FieldPair(1j * curl(op.mu_inv.apply(state.v), g), -1j * curl(op.alpha_inv.apply(state.u), g), g)


@dataclass
class ResolventSolution:
    state: FieldPair
    residual: float
    iterations: int
    divergence: tuple[float, float]
    history: list[float] = field(default_factory=list)
    method: str = "pcg"

    def log_lines(self) -> str:
        """Iteration log as JSON lines."""
        return "".join(
            json.dumps({"iteration": i, "residual": float(r)}) + "\n" for i, r in enumerate(self.history)
        )


def _reference(m: MatrixField) -> float:
    return m.mean_trace()


def _make_preconditioner(op: MaxwellOperator, E2: complex, real: bool):
    g = op.grid
    k = g.wavevector(half=real)
    ksq = g.ksq(half=real)
    rho_alpha = _reference(op.alpha)
    rho_mu_inv = _reference(op.mu_inv)
    c_long = 1.0 / (-E2 * rho_alpha)
    c_trans = 1.0 / (rho_mu_inv * ksq - E2 * rho_alpha)
    inv_ksq = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv_ksq, where=ksq > 0)
    if real:
        c_long, c_trans = float(np.real(c_long)), np.real(c_trans)

    def precond(r: np.ndarray) -> np.ndarray:
        rh = sfft.rfftn(r, axes=_AXES) if real else sfft.fftn(r, axes=_AXES)
        r0, r1, r2 = rh[..., 0, :, :, :], rh[..., 1, :, :, :], rh[..., 2, :, :, :]
        kr = (k[0] * r0 + k[1] * r1 + k[2] * r2) * inv_ksq
        out = []
        for c, rc in enumerate((r0, r1, r2)):
            longi = k[c] * kr
            out.append(c_trans * (rc - longi) + c_long * longi)
        oh = np.stack(out, axis=-4)
        return sfft.irfftn(oh, s=g.shape, axes=_AXES) if real else sfft.ifftn(oh, axes=_AXES)

    return precond


def _second_order_operator(op: MaxwellOperator, E2: complex):
    g = op.grid

    def apply_op(e: np.ndarray) -> np.ndarray:
        return curl(op.mu_inv.apply(curl(e, g)), g) - E2 * op.alpha.apply(e)

    return apply_op


def first_order_residual(op: MaxwellOperator, state: FieldPair, f: FieldPair, E: complex) -> FieldPair:
    out = apply(op, state)
    return FieldPair(out.u - E * state.u - f.u, out.v - E * state.v - f.v, op.grid)


def resolvent_solve(
    op: MaxwellOperator,
    f: FieldPair,
    E=1j,
    tol: float = 1e-10,
    *,
    maxiter: int = 2000,
    project: bool = True,
) -> ResolventSolution:
    """Solve ``(M - E) s = f`` for ``s = (u, v)``.

    Parameters
    ----------
    op : MaxwellOperator
    f : FieldPair
        Right-hand side; Leray-projected first when ``project`` is set.
    E : complex or SpectralShift
        Spectral parameter with ``Im E > 0``.
    tol : float
        Requested bound on ``||(M - E) s - f|| / ||f||`` (L2).

    Returns
    -------
    ResolventSolution
        The state, the measured first-order relative residual, Krylov
        iteration count and history, and the L2 norms of ``div u`` and
        ``div v``.
    """
    E = complex(SpectralShift.coerce(E).value)
    g = op.grid
    op.grid.require_same(f.grid)
    if project:
        f = f.projected()
    fnorm = f.l2_norm()
    if fnorm == 0.0:
        zero = FieldPair.zeros(g)
        return ResolventSolution(zero, 0.0, 0, (0.0, 0.0), [0.0])
    E2 = E * E
    rhs = E * f.u + 1j * curl(op.mu_inv.apply(f.v), g)
    real = abs(E2.imag) <= 1e-15 * abs(E2)
    apply_op = _second_order_operator(op, E2.real if real else E2)
    precond = _make_preconditioner(op, E2.real if real else E2, real)
    # The first-order residual is measured after the fact; if the inner
    # tolerance was too loose the iteration resumes from its last iterate.
    inner_tol = 0.1 * tol
    x0 = None
    history: list[float] = []
    iterations = 0
    for _ in range(4):
        if real:
            stacked = np.stack([rhs.real, rhs.imag])
            result = pcg(apply_op, stacked, precond=precond, x0=x0, tol=inner_tol, maxiter=maxiter)
            e = result.x[0] + 1j * result.x[1]
            method = "pcg"
        else:
            result = cocg(apply_op, rhs, precond=precond, x0=x0, tol=inner_tol, maxiter=maxiter)
            e = result.x
            method = "cocg"
        x0 = result.x
        history.extend(result.history)
        iterations += result.iterations
        u = op.alpha.apply(e)
        if project:
            u = leray_project(u, g)
        v = (-1j * curl(e, g) - f.v) / E
        state = FieldPair(u, v, g)
        res = first_order_residual(op, state, f, E).l2_norm() / fnorm
        if res <= tol or not result.converged:
            break
        inner_tol *= max(0.5 * tol / res, 1e-3)
    if not result.converged or res > tol:
        raise ResolventError(
            f"resolvent solve stopped at relative residual {res:.3e} after {iterations} "
            f"iterations (requested {tol:.1e}); history tail {history[-3:]}"
        )
    div = (l2_norm(divergence(u, g), g), l2_norm(divergence(v, g), g))
    return ResolventSolution(state, res, iterations, div, history, method)


def random_solenoidal_pair(grid: MacroGrid, rng: np.random.Generator, *, max_mode: int = 4) -> FieldPair:
    """Random band-limited divergence-free pair with Fourier modes ``|m|_inf <= max_mode``."""
    shape = grid.shape
    vals = []
    for _ in range(2):
        hat = np.zeros((3,) + shape, dtype=complex)
        sl = [np.r_[0 : max_mode + 1, n - max_mode : n] for n in shape]
        idx = np.ix_(*sl)
        for c in range(3):
            block = rng.standard_normal(tuple(len(s) for s in sl)) + 1j * rng.standard_normal(tuple(len(s) for s in sl))
            hat[c][idx] = block
        vals.append(leray_project(sfft.ifftn(hat, axes=_AXES), grid))
    pair = FieldPair(vals[0], vals[1], grid)
    return pair * (1.0 / pair.l2_norm())


def selfadjointness_defect(op: MaxwellOperator, trials: int = 3, *, seed: int = 0, max_mode: int = 4) -> float:
    """Largest ``|<Mp, q>_w - <p, Mq>_w| / (||p||_w ||q||_w)`` over random solenoidal pairs."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = random_solenoidal_pair(op.grid, rng, max_mode=max_mode)
        q = random_solenoidal_pair(op.grid, rng, max_mode=max_mode)
        lhs = weighted_inner(apply(op, p), q, op.alpha_inv, op.mu_inv)
        rhs = weighted_inner(p, apply(op, q), op.alpha_inv, op.mu_inv)
        pn = np.sqrt(weighted_inner(p, p, op.alpha_inv, op.mu_inv).real)
        qn = np.sqrt(weighted_inner(q, q, op.alpha_inv, op.mu_inv).real)
        worst = max(worst, abs(lhs - rhs) / (pn * qn))
    return float(worst)


def weighted_norm(op: MaxwellOperator, state: FieldPair) -> float:
    return float(np.sqrt(weighted_inner(state, state, op.alpha_inv, op.mu_inv).real))

"""Periodic cell problems: scalar potentials, correctors and curl-div systems.

All solves run on a :class:`~curlhom.fields.CellGrid` with spectral
derivatives.  Potentials solve ``-div(beta grad phi) = div(beta e_k)`` by
preconditioned CG with the inverse of a constant-coefficient Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .fields import CellGrid, MatrixField, divergence, gradient, inner, l2_norm, curl
from .linalg import pcg

__all__ = [
    "CellSolveConfig",
    "CellSolveError",
    "CorrectorSet",
    "CurlDivSolution",
    "solve_potential",
    "correctors",
    "solve_curl_div",
    "compatibility_check",
]


class CellSolveError(RuntimeError):
    """A cell solve failed to converge or received incompatible data."""


@dataclass(frozen=True)
class CellSolveConfig:
    """Tolerances for cell solves.

    ``reference_medium`` scales the preconditioner; ``None`` means the mean
    of ``trace(beta) / 3``.  ``compatibility_tolerance`` is the threshold on
    the solvability residuals accepted by :func:`solve_curl_div`, relative
    to ``|Omega| (||F||_inf + ||G||_inf)`` (absolute when the data vanish).
    """

    cg_tolerance: float = 1e-11
    max_iterations: int = 500
    reference_medium: float | None = None
    compatibility_tolerance: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.cg_tolerance < 1.0:
            raise ValueError("cg_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.reference_medium is not None and self.reference_medium <= 0:
            raise ValueError("reference_medium must be positive")


def _potential_operator(beta: MatrixField):
    grid = beta.grid

    def apply(phi: np.ndarray) -> np.ndarray:
        return -divergence(beta.apply(gradient(phi, grid)), grid)

    return apply


def _potential_preconditioner(beta: MatrixField, cfg: CellSolveConfig):
    grid = beta.grid
    rho = cfg.reference_medium if cfg.reference_medium is not None else beta.mean_trace()
    ksq = grid.ksq(half=True)
    inv = np.zeros_like(ksq)
    np.divide(1.0, rho * ksq, out=inv, where=ksq > 0)

    def apply(r: np.ndarray) -> np.ndarray:
        return sfft.irfftn(inv * sfft.rfftn(r, axes=(-3, -2, -1)), s=grid.shape, axes=(-3, -2, -1))

    return apply


def _solve_div_problem(beta: MatrixField, rhs: np.ndarray, cfg: CellSolveConfig, x0=None, what="potential"):
    """Solve ``-div(beta grad phi) = rhs`` for zero-mean real ``phi`` (batched over leading axes)."""
    result = pcg(
        _potential_operator(beta),
        rhs,
        precond=_potential_preconditioner(beta, cfg),
        x0=x0,
        tol=cfg.cg_tolerance,
        maxiter=cfg.max_iterations,
    )
    if not result.converged:
        raise CellSolveError(
            f"{what} solve did not converge in {cfg.max_iterations} iterations "
            f"(final relative residual {result.residual:.3e})"
        )
    phi = result.x - np.mean(result.x, axis=(-3, -2, -1), keepdims=True)
    return phi, result


def solve_potential(
    beta: MatrixField, k: int, cfg: CellSolveConfig = CellSolveConfig(), *, x0: np.ndarray | None = None
) -> tuple[np.ndarray, dict]:
    """Zero-mean periodic ``phi_k`` with ``div(beta (grad phi_k + e_k)) = 0``.

    Parameters
    ----------
    beta : MatrixField
        SPD coefficient on a cell grid.
    k : int
        Axis index 0, 1 or 2.
    cfg : CellSolveConfig
    x0 : ndarray, optional
        Initial iterate (warm start).

    Returns
    -------
    phi : ndarray
        Real potential of shape ``grid.shape``.
    info : dict
        ``residual`` (relative, measured on the divergence equation) and
        ``iterations``.
    """
    if k not in (0, 1, 2):
        raise ValueError("corrector axis must be 0, 1 or 2")
    grid = beta.grid
    unit = np.zeros((3,) + grid.shape)
    unit[k] = 1.0
    rhs = divergence(beta.apply(unit), grid)
    phi, result = _solve_div_problem(beta, rhs, cfg, x0=x0)
    return phi, {"residual": result.residual, "iterations": result.iterations}


@dataclass
class CorrectorSet:
    """Potentials ``phi_k`` and correctors ``zeta_k = e_k + grad phi_k`` of one cell problem.

    ``fields[k]`` is the vector field ``zeta_k`` (shape ``(3,) + grid.shape``).
    ``tag`` is ``"alpha"`` or ``"mu"``.
    """

    beta: MatrixField
    potentials: np.ndarray
    fields: np.ndarray
    tag: str = "alpha"
    x: np.ndarray | None = None
    residuals: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)

    @property
    def grid(self) -> CellGrid:
        return self.beta.grid

    def fluxes(self) -> np.ndarray:
        """``beta zeta_k`` for ``k = 0, 1, 2``."""
        return self.beta.apply(self.fields)

    def effective(self, form: str = "energy", symmetrize: bool = True) -> tuple[np.ndarray, float]:
        """Effective tensor and its asymmetry before symmetrization.

        ``form="energy"`` uses ``|Omega|^{-1} (beta zeta_p, zeta_k)``;
        ``form="flux"`` uses the cell mean of ``beta zeta_p``.
        """
        flux = self.fluxes()
        if form == "energy":
            lam = np.einsum("pcxyz,kcxyz->kp", flux, self.fields) / self.grid.size
        elif form == "flux":
            lam = np.mean(flux, axis=(-3, -2, -1)).T
        else:
            raise ValueError("form must be 'energy' or 'flux'")
        asym = float(np.abs(lam - lam.T).max())
        if symmetrize:
            lam = 0.5 * (lam + lam.T)
        return lam, asym

    def invariant_defects(self) -> dict[str, float]:
        grid = self.grid
        flux = self.fluxes()
        mean_defect = float(np.abs(np.mean(self.fields, axis=(-3, -2, -1)) - np.eye(3)).max())
        rot = max(l2_norm(curl(self.fields[k], grid), grid) for k in range(3))
        div = max(l2_norm(divergence(flux[k], grid), grid) for k in range(3))
        return {
            "mean_defect": mean_defect,
            "potential_mean": float(np.abs(np.mean(self.potentials, axis=(-3, -2, -1))).max()),
            "rot_residual": rot,
            "div_flux_residual": div,
        }


def correctors(
    beta: MatrixField,
    cfg: CellSolveConfig = CellSolveConfig(),
    *,
    tag: str = "alpha",
    x=None,
    warm_start: np.ndarray | None = None,
) -> CorrectorSet:
    """Solve the three potential problems and assemble the correctors."""
    if tag not in ("alpha", "mu"):
        raise ValueError("corrector tag must be 'alpha' or 'mu'")
    grid = beta.grid
    pots = np.zeros((3,) + grid.shape)
    residuals, iterations = [], []
    for k in range(3):
        x0 = None if warm_start is None else warm_start[k]
        pots[k], info = solve_potential(beta, k, cfg, x0=x0)
        residuals.append(info["residual"])
        iterations.append(info["iterations"])
    fields = gradient(pots, grid) + np.eye(3)[:, :, None, None, None]
    return CorrectorSet(
        beta, pots, fields, tag, None if x is None else np.asarray(x, dtype=float), residuals, iterations
    )


def compatibility_check(F: np.ndarray, G: np.ndarray, corr: CorrectorSet) -> np.ndarray:
    """Solvability residuals ``|int (F, zeta_k)|`` for ``k = 1..3`` and ``|int G|``."""
    grid = corr.grid
    out = np.empty(4)
    for k in range(3):
        out[k] = abs(inner(F, corr.fields[k], grid))
    out[3] = abs(complex(np.sum(G)) * grid.node_volume)
    return out


@dataclass
class CurlDivSolution:
    w: np.ndarray
    rot_residual: float
    div_residual: float
    orthogonality: float
    compatibility: np.ndarray
    iterations: int


def _split_complex(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag])


def solve_curl_div(
    beta: MatrixField,
    F: np.ndarray,
    G: np.ndarray,
    corr: CorrectorSet,
    cfg: CellSolveConfig = CellSolveConfig(),
    *,
    check: bool = True,
) -> CurlDivSolution:
    """Solve ``rot(beta^{-1} w) = F``, ``div w = G`` with ``w`` orthogonal to ``{beta zeta_k}``.

    The curl part is inverted exactly in Fourier space (``z`` with
    ``rot z = F``, ``div z = 0``); the remaining curl-free part
    ``grad p + c`` follows from one scalar potential solve for
    ``div(beta grad p) = G - div(beta z)`` plus a 3x3 Gram system that
    enforces L2 orthogonality to the homogeneous solutions.

    Parameters
    ----------
    beta : MatrixField
    F : ndarray
        Vector field, shape ``(3,) + grid.shape``; real or complex.
    G : ndarray
        Scalar field.
    corr : CorrectorSet
        Correctors of ``beta``.
    check : bool
        Refuse data whose solvability residuals exceed the tolerance.
    """
    grid = beta.grid
    corr.grid.require_same(grid)
    compat = compatibility_check(F, G, corr)
    scale = grid.volume * (float(np.abs(F).max()) + float(np.abs(G).max()))
    limit = cfg.compatibility_tolerance * (scale if scale > 0 else 1.0)
    if check and np.any(compat > limit):
        names = ["(F, zeta_1)", "(F, zeta_2)", "(F, zeta_3)", "mean G"]
        bad = [f"{n}={c:.3e}" for n, c in zip(names, compat) if c > limit]
        raise CellSolveError(f"incompatible curl-div data (limit {limit:.3e}): {', '.join(bad)}")

    real = not (np.iscomplexobj(F) or np.iscomplexobj(G))
    Fh = sfft.fftn(np.asarray(F, dtype=complex), axes=(-3, -2, -1))
    k = grid.wavevector(half=False)
    ksq = grid.ksq(half=False)
    live = ksq > 0
    inv = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv, where=live)
    kdotF = k[0] * Fh[0] + k[1] * Fh[1] + k[2] * Fh[2]
    Fp = [np.where(live, Fh[c] - k[c] * kdotF * inv, 0.0) for c in range(3)]
    zh = [
        1j * (k[1] * Fp[2] - k[2] * Fp[1]) * inv,
        1j * (k[2] * Fp[0] - k[0] * Fp[2]) * inv,
        1j * (k[0] * Fp[1] - k[1] * Fp[0]) * inv,
    ]
    z = sfft.ifftn(np.stack(zh), axes=(-3, -2, -1))
    # Keep only the part of G in the range of the discrete divergence: the
    # mean and the modes whose symbol vanishes are unreachable.
    Gc = sfft.ifftn(np.where(live, sfft.fftn(np.asarray(G, dtype=complex)), 0.0))
    if real:
        z, Gc = z.real, Gc.real
        rhs = divergence(beta.apply(z), grid) - Gc
    else:
        rhs = divergence(beta.apply(_split_complex(z)), grid) - _split_complex(Gc)
    iterations = 0
    if np.any(rhs):
        pot, result = _solve_div_problem(beta, rhs, cfg, what="curl-div potential")
        iterations = result.iterations
        if not real:
            pot = pot[0] + 1j * pot[1]
    else:
        pot = np.zeros(grid.shape, dtype=z.dtype)
    w = beta.apply(z + gradient(pot, grid))

    flux = corr.fluxes()
    gram = np.einsum("icxyz,jcxyz->ij", flux, flux) * grid.node_volume
    proj = np.array([inner(w, flux[j], grid) for j in range(3)])
    coef = np.linalg.solve(gram, -proj)
    w = w + np.einsum("k,kcxyz->cxyz", coef, flux)

    rot_res = l2_norm(curl(beta.inverse.apply(w), grid) - F, grid)
    div_res = l2_norm(divergence(w, grid) - G, grid)
    fn, gn = l2_norm(F, grid), l2_norm(np.asarray(G), grid)
    wn = l2_norm(w, grid)
    ortho = max(
        abs(inner(w, flux[j], grid)) / max(wn * l2_norm(flux[j], grid), np.finfo(float).tiny) for j in range(3)
    )
    return CurlDivSolution(
        w,
        rot_res / fn if fn > 0 else rot_res,
        div_res / gn if gn > 0 else div_res,
        ortho if wn > 0 else 0.0,
        compat,
        iterations,
    )

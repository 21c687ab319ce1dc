"""Periodic grids, spectral calculus, matrix fields and binary field dumps.

Vector fields are plain ``numpy`` arrays whose last three axes are the grid
axes and whose fourth-from-last axis holds the three Cartesian components,
i.e. ``(..., 3, n1, n2, n3)``.  Scalar fields are ``(..., n1, n2, n3)``.
Leading axes are treated as a batch and broadcast through every operator.

Derivatives are Fourier multipliers.  Each grid carries a *derivative
symbol*: either the exact trigonometric one (``"spectral"``, Nyquist mode
set to zero) or the symbol of a central finite-difference stencil
(``"fd2"`` ... ``"fd8"``).  All operators of one grid share the symbol, so
the discrete identities ``rot grad = 0`` and ``div rot = 0`` hold exactly
whichever symbol is chosen.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Lattice",
    "PeriodicGrid",
    "CellGrid",
    "MacroGrid",
    "MatrixField",
    "FieldPair",
    "spectral_diff",
    "gradient",
    "divergence",
    "curl",
    "laplacian",
    "leray_project",
    "sobolev_norm",
    "l2_norm",
    "inner",
    "weighted_inner",
    "dump_field",
    "load_field",
    "trig_interp_matrix",
    "fourier_resample",
]

_AXES = (-3, -2, -1)

# Central-difference weights c_m of (f(x+mh) - f(x-mh)) / h.
_FD_WEIGHTS = {
    2: (1 / 2,),
    4: (2 / 3, -1 / 12),
    6: (3 / 4, -3 / 20, 1 / 60),
    8: (4 / 5, -1 / 5, 4 / 105, -1 / 280),
}


def _stencil_order(stencil: str) -> int:
    if stencil == "spectral":
        return 0
    if stencil.startswith("fd") and stencil[2:].isdigit() and int(stencil[2:]) in _FD_WEIGHTS:
        return int(stencil[2:])
    raise ValueError(f"unknown derivative stencil {stencil!r}; use 'spectral' or fd2/fd4/fd6/fd8")


class Lattice:
    """Period lattice spanned by the rows of ``basis``."""

    def __init__(self, basis=None):
        basis = np.eye(3) if basis is None else np.array(basis, dtype=float)
        if basis.shape != (3, 3):
            raise ValueError("lattice basis must be a 3x3 array of row vectors")
        det = float(np.linalg.det(basis))
        if abs(det) < 1e-12 * max(1.0, float(np.abs(basis).max()) ** 3):
            raise ValueError("lattice basis vectors are linearly dependent")
        self.basis = basis
        self.basis.setflags(write=False)

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    @cached_property
    def reciprocal(self) -> np.ndarray:
        """Rows ``b_j`` with ``a_i . b_j = delta_ij``."""
        return np.linalg.inv(self.basis).T

    def fractional(self, y: np.ndarray) -> np.ndarray:
        """Fractional coordinates of points ``y`` (last axis of length 3)."""
        return np.asarray(y, dtype=float) @ self.reciprocal.T

    def reduce(self, y: np.ndarray) -> np.ndarray:
        """Map points into the fundamental cell spanned by the basis."""
        frac = self.fractional(y)
        return (frac - np.floor(frac)) @ self.basis

    def __eq__(self, other) -> bool:
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __hash__(self) -> int:
        return hash(self.basis.tobytes())

    def __repr__(self) -> str:
        return f"Lattice(basis={self.basis.tolist()})"


class PeriodicGrid:
    """Uniform periodic sampling of the parallelepiped ``origin + basis^T [0,1)^3``."""

    kind = "grid"
    kind_code = 255

    def __init__(self, basis, resolution, origin=(0.0, 0.0, 0.0), stencil: str = "spectral"):
        self.basis = np.array(basis, dtype=float)
        self.basis.setflags(write=False)
        res = tuple(int(n) for n in np.broadcast_to(np.asarray(resolution), (3,)))
        for n in res:
            if n < 4 or n % 2:
                raise ValueError(f"resolution {res} invalid: every axis needs an even count >= 4")
        self.shape = res
        self.origin = np.array(origin, dtype=float)
        self.stencil = stencil
        self.stencil_order = _stencil_order(stencil)

    # -- geometry -----------------------------------------------------------
    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    @property
    def node_volume(self) -> float:
        return self.volume / self.size

    @cached_property
    def _reciprocal(self) -> np.ndarray:
        return np.linalg.inv(self.basis).T

    def axis_fractions(self, axis: int) -> np.ndarray:
        return np.arange(self.shape[axis]) / self.shape[axis]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(3, n1, n2, n3)``."""
        f = np.meshgrid(*(self.axis_fractions(a) for a in range(3)), indexing="ij")
        pts = np.einsum("jc,jxyz->cxyz", self.basis, np.stack(f))
        return pts + self.origin[:, None, None, None]

    def same_as(self, other: "PeriodicGrid") -> bool:
        return (
            type(self) is type(other)
            and self.shape == other.shape
            and np.array_equal(self.basis, other.basis)
            and np.array_equal(self.origin, other.origin)
            and self.stencil == other.stencil
        )

    def require_same(self, other: "PeriodicGrid") -> None:
        if not self.same_as(other):
            raise ValueError("grid mismatch between operands")

    # -- Fourier symbols ----------------------------------------------------
    def _axis_symbol(self, axis: int, half: bool) -> np.ndarray:
        """Real symbol sigma with d/d(fractional coordinate) <-> i*sigma."""
        n = self.shape[axis]
        m = np.fft.rfftfreq(n, 1.0 / n) if half else np.fft.fftfreq(n, 1.0 / n)
        if self.stencil_order == 0:
            sig = 2.0 * np.pi * m
            sig[np.abs(m) == n // 2] = 0.0
        else:
            theta = 2.0 * np.pi * m / n
            sig = np.zeros_like(theta)
            for j, c in enumerate(_FD_WEIGHTS[self.stencil_order], start=1):
                sig += 2.0 * c * np.sin(j * theta)
            sig *= n
            sig[np.abs(m) == n // 2] = 0.0
        shape = [1, 1, 1]
        shape[axis] = sig.size
        return sig.reshape(shape)

    def _wavevector(self, half: bool) -> tuple:
        sym = [self._axis_symbol(a, half and a == 2) for a in range(3)]
        rec = self._reciprocal
        comps = []
        for c in range(3):
            acc = None
            for j in range(3):
                if rec[j, c] == 0.0:
                    continue
                term = sym[j] * rec[j, c]
                acc = term if acc is None else acc + term
            if acc is None:
                acc = np.zeros((1, 1, 1))
            comps.append(acc)
        return tuple(comps)

    @cached_property
    def wavevector_full(self) -> tuple:
        return self._wavevector(half=False)

    @cached_property
    def wavevector_half(self) -> tuple:
        return self._wavevector(half=True)

    def wavevector(self, half: bool = False) -> tuple:
        """Derivative multipliers ``(k1, k2, k3)`` broadcastable to the spectrum."""
        return self.wavevector_half if half else self.wavevector_full

    @cached_property
    def ksq_full(self) -> np.ndarray:
        k = self.wavevector_full
        return k[0] ** 2 + k[1] ** 2 + k[2] ** 2

    @cached_property
    def ksq_half(self) -> np.ndarray:
        k = self.wavevector_half
        return k[0] ** 2 + k[1] ** 2 + k[2] ** 2

    def ksq(self, half: bool = False) -> np.ndarray:
        return self.ksq_half if half else self.ksq_full

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, stencil={self.stencil!r})"


class CellGrid(PeriodicGrid):
    """Sampling of the unit cell of a lattice; nodes start at the origin."""

    kind = "cell"
    kind_code = 0

    def __init__(self, resolution, lattice: Lattice | None = None):
        self.lattice = lattice if lattice is not None else Lattice()
        super().__init__(self.lattice.basis, resolution, (0.0, 0.0, 0.0), "spectral")

    def __repr__(self) -> str:
        return f"CellGrid(shape={self.shape}, volume={self.volume:g})"


class MacroGrid(PeriodicGrid):
    """Periodic cube ``[-L/2, L/2)^3`` that truncates the macroscopic domain.

    Parameters
    ----------
    resolution : int or sequence of int
        Nodes per axis (even, at least 4).
    side : float
        Box side ``L``; must exceed ``2 R``.
    support_radius : float
        Radius ``R`` of the ball outside of which the media are the identity.
    stencil : str
        Derivative symbol, ``"spectral"`` or ``"fd2"``/``"fd4"``/``"fd6"``/``"fd8"``.
    """

    kind = "macro"
    kind_code = 1

    def __init__(self, resolution, side: float, support_radius: float, stencil: str = "spectral"):
        side = float(side)
        support_radius = float(support_radius)
        if not side > 2.0 * support_radius > 0.0:
            raise ValueError(f"macro box side {side} must exceed twice the support radius {support_radius}")
        self.side = side
        self.support_radius = support_radius
        super().__init__(side * np.eye(3), resolution, (-side / 2,) * 3, stencil)

    @property
    def spacing(self) -> np.ndarray:
        return self.side / np.asarray(self.shape, dtype=float)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return -self.side / 2 + self.side * self.axis_fractions(axis)

    def radius(self) -> np.ndarray:
        x = [self.axis_coordinates(a) for a in range(3)]
        return np.sqrt(x[0][:, None, None] ** 2 + x[1][None, :, None] ** 2 + x[2][None, None, :] ** 2)

    def outside_mask(self) -> np.ndarray:
        return self.radius() >= self.support_radius

    def with_stencil(self, stencil: str) -> "MacroGrid":
        return MacroGrid(self.shape, self.side, self.support_radius, stencil)

    def with_resolution(self, resolution) -> "MacroGrid":
        return MacroGrid(resolution, self.side, self.support_radius, self.stencil)

    def __repr__(self) -> str:
        return (
            f"MacroGrid(shape={self.shape}, side={self.side:g}, "
            f"R={self.support_radius:g}, stencil={self.stencil!r})"
        )


# ---------------------------------------------------------------------------
# Transforms and differential operators
# ---------------------------------------------------------------------------


def _is_real(values: np.ndarray) -> bool:
    return not np.iscomplexobj(values)


def _forward(values: np.ndarray, half: bool) -> np.ndarray:
    return sfft.rfftn(values, axes=_AXES) if half else sfft.fftn(values, axes=_AXES)


def _inverse(hat: np.ndarray, grid: PeriodicGrid, half: bool) -> np.ndarray:
    if half:
        return sfft.irfftn(hat, s=grid.shape, axes=_AXES)
    return sfft.ifftn(hat, axes=_AXES)


def _check_shape(values: np.ndarray, grid: PeriodicGrid, vector: bool) -> None:
    if tuple(values.shape[-3:]) != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if vector and (values.ndim < 4 or values.shape[-4] != 3):
        raise ValueError("expected a vector field with 3 components on axis -4")


def gradient(phi: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Gradient of a scalar field, shape ``(..., 3, n1, n2, n3)``."""
    _check_shape(phi, grid, vector=False)
    half = _is_real(phi)
    ph = _forward(phi, half)
    k = grid.wavevector(half)
    return np.stack([_inverse(1j * k[c] * ph, grid, half) for c in range(3)], axis=-4)


def divergence(u: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Divergence of a vector field."""
    _check_shape(u, grid, vector=True)
    half = _is_real(u)
    uh = _forward(u, half)
    k = grid.wavevector(half)
    acc = k[0] * uh[..., 0, :, :, :] + k[1] * uh[..., 1, :, :, :] + k[2] * uh[..., 2, :, :, :]
    return _inverse(1j * acc, grid, half)


def curl(u: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Curl (rot) of a vector field."""
    _check_shape(u, grid, vector=True)
    half = _is_real(u)
    uh = _forward(u, half)
    k = grid.wavevector(half)
    u0, u1, u2 = uh[..., 0, :, :, :], uh[..., 1, :, :, :], uh[..., 2, :, :, :]
    out = [
        1j * (k[1] * u2 - k[2] * u1),
        1j * (k[2] * u0 - k[0] * u2),
        1j * (k[0] * u1 - k[1] * u0),
    ]
    return np.stack([_inverse(c, grid, half) for c in out], axis=-4)


def laplacian(phi: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    _check_shape(phi, grid, vector=False)
    half = _is_real(phi)
    return _inverse(-grid.ksq(half) * _forward(phi, half), grid, half)


def spectral_diff(values: np.ndarray, grid: PeriodicGrid, op: str) -> np.ndarray:
    """Apply ``grad``, ``div``, ``rot`` (alias ``curl``) or ``lap`` on ``grid``."""
    ops = {"grad": gradient, "div": divergence, "rot": curl, "curl": curl, "lap": laplacian}
    try:
        return ops[op](values, grid)
    except KeyError:
        raise ValueError(f"unknown differential operator {op!r}") from None


def leray_project(u: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Orthogonal projection onto discretely divergence-free fields.

    The zero mode and modes whose symbol vanishes are left untouched.
    """
    _check_shape(u, grid, vector=True)
    half = _is_real(u)
    uh = _forward(u, half)
    k = grid.wavevector(half)
    ksq = grid.ksq(half)
    kdotu = k[0] * uh[..., 0, :, :, :] + k[1] * uh[..., 1, :, :, :] + k[2] * uh[..., 2, :, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(ksq > 0, kdotu / np.where(ksq > 0, ksq, 1.0), 0.0)
    out = [uh[..., c, :, :, :] - k[c] * coef for c in range(3)]
    return np.stack([_inverse(c, grid, half) for c in out], axis=-4)


# ---------------------------------------------------------------------------
# Reductions (deterministic pairwise summation through np.sum)
# ---------------------------------------------------------------------------


def inner(a: np.ndarray, b: np.ndarray, grid: PeriodicGrid) -> complex:
    """Quadrature of ``sum_c a_c conj(b_c)`` over the grid."""
    prod = a * np.conj(b) if np.iscomplexobj(b) else a * b
    return complex(np.sum(prod)) * grid.node_volume


def l2_norm(values: np.ndarray, grid: PeriodicGrid) -> float:
    if np.iscomplexobj(values):
        sq = values.real**2 + values.imag**2
    else:
        sq = values**2
    return float(np.sqrt(np.sum(sq) * grid.node_volume))


def sobolev_norm(values: np.ndarray, grid: PeriodicGrid, order: int = 0) -> float:
    """Discrete ``H^s`` norm with Parseval weights ``(1 + |k|^2)^s``.

    Components and any leading batch axes are summed over.
    """
    if order < 0:
        raise ValueError("Sobolev order must be nonnegative")
    _check_shape(values, grid, vector=False)
    if order == 0:
        return l2_norm(values, grid)
    vh = sfft.fftn(values, axes=_AXES)
    w = (1.0 + grid.ksq_full) ** order
    total = np.sum(w * (vh.real**2 + vh.imag**2))
    return float(np.sqrt(total * grid.volume) / grid.size)


# ---------------------------------------------------------------------------
# Matrix fields and field pairs
# ---------------------------------------------------------------------------


class MatrixField:
    """Real symmetric 3x3 matrix per node.

    Parameters
    ----------
    grid : PeriodicGrid
    values : ndarray
        ``(3, 3, n1, n2, n3)`` for a full field, or ``(n1, n2, n3)`` (or a
        scalar) for an isotropic field ``values * I``.
    isotropic : bool
        Whether ``values`` is a scalar multiple of the identity per node.
    check : bool
        Verify nodewise positive-definiteness on construction.
    """

    def __init__(self, grid: PeriodicGrid, values, *, isotropic: bool = False, check: bool = True):
        self.grid = grid
        values = np.asarray(values, dtype=float)
        if isotropic:
            values = np.broadcast_to(values, grid.shape).copy()
        elif values.shape != (3, 3) + grid.shape:
            raise ValueError(f"matrix field shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix field has non-finite entries")
        self.values = values
        self.isotropic = isotropic
        self._inverse: MatrixField | None = None
        if check:
            self.check_spd()

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> "MatrixField":
        return cls(grid, np.ones(grid.shape), isotropic=True, check=False)

    def full(self) -> np.ndarray:
        if self.isotropic:
            return np.einsum("ij,...->ij...", np.eye(3), self.values)
        return self.values

    def node(self, index) -> np.ndarray:
        if self.isotropic:
            return self.values[index] * np.eye(3)
        return self.values[(slice(None), slice(None)) + tuple(index)]

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Nodewise matrix-vector product for ``vec`` of shape ``(..., 3, n1, n2, n3)``."""
        if self.isotropic:
            return self.values * vec
        return np.einsum("ijxyz,...jxyz->...ixyz", self.values, vec)

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues, shape ``(n1, n2, n3, 3)``."""
        if self.isotropic:
            return np.repeat(self.values[..., None], 3, axis=-1)
        return np.linalg.eigvalsh(np.moveaxis(self.values, (0, 1), (-2, -1)))

    def min_eigenvalue(self) -> float:
        return float(self.values.min()) if self.isotropic else float(self.eigenvalues()[..., 0].min())

    def asymmetry(self) -> float:
        if self.isotropic:
            return 0.0
        return float(np.abs(self.values - np.swapaxes(self.values, 0, 1)).max())

    def check_spd(self) -> None:
        if self.isotropic:
            bad = np.argwhere(self.values <= 0.0)
            if bad.size:
                idx = tuple(int(i) for i in bad[0])
                raise ValueError(f"matrix field not positive definite at node {idx}: eigenvalue {self.values[idx]:.6g}")
            return
        if self.asymmetry() > 1e-12 * max(1.0, float(np.abs(self.values).max())):
            raise ValueError(f"matrix field not symmetric (defect {self.asymmetry():.3g})")
        ev = self.eigenvalues()[..., 0]
        bad = np.argwhere(ev <= 0.0)
        if bad.size:
            idx = tuple(int(i) for i in bad[0])
            raise ValueError(f"matrix field not positive definite at node {idx}: eigenvalue {ev[idx]:.6g}")

    @property
    def inverse(self) -> "MatrixField":
        if self._inverse is None:
            if self.isotropic:
                inv = MatrixField(self.grid, 1.0 / self.values, isotropic=True, check=False)
            else:
                m = np.moveaxis(self.values, (0, 1), (-2, -1))
                minv = np.linalg.inv(m)
                minv = 0.5 * (minv + np.swapaxes(minv, -1, -2))
                inv = MatrixField(self.grid, np.moveaxis(minv, (-2, -1), (0, 1)), check=False)
            inv._inverse = self
            self._inverse = inv
        return self._inverse

    def mean(self) -> np.ndarray:
        if self.isotropic:
            return float(np.mean(self.values)) * np.eye(3)
        return np.mean(self.values, axis=(2, 3, 4))

    def mean_trace(self) -> float:
        if self.isotropic:
            return float(np.mean(self.values))
        return float(np.mean(self.values[0, 0] + self.values[1, 1] + self.values[2, 2]) / 3.0)

    def is_constant(self) -> bool:
        v = self.values
        if self.isotropic:
            return bool(np.all(v == v.flat[0]))
        ref = v[:, :, :1, :1, :1]
        return bool(np.all(v == ref))


@dataclass
class FieldPair:
    """One Maxwell state ``(u, v)`` on a shared grid."""

    u: np.ndarray
    v: np.ndarray
    grid: PeriodicGrid

    def __post_init__(self):
        _check_shape(self.u, self.grid, vector=True)
        _check_shape(self.v, self.grid, vector=True)
        if self.u.shape != self.v.shape:
            raise ValueError("u and v components must share one grid")

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "FieldPair":
        z = np.zeros((3,) + grid.shape, dtype=complex)
        return cls(z, z.copy(), grid)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.v], axis=-4)

    def __add__(self, other: "FieldPair") -> "FieldPair":
        self.grid.require_same(other.grid)
        return FieldPair(self.u + other.u, self.v + other.v, self.grid)

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        self.grid.require_same(other.grid)
        return FieldPair(self.u - other.u, self.v - other.v, self.grid)

    def __mul__(self, scalar) -> "FieldPair":
        return FieldPair(self.u * scalar, self.v * scalar, self.grid)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.hypot(l2_norm(self.u, self.grid), l2_norm(self.v, self.grid)))

    def projected(self) -> "FieldPair":
        return FieldPair(leray_project(self.u, self.grid), leray_project(self.v, self.grid), self.grid)

    def divergence_norm(self) -> float:
        return float(
            np.hypot(
                l2_norm(divergence(self.u, self.grid), self.grid),
                l2_norm(divergence(self.v, self.grid), self.grid),
            )
        )


def weighted_inner(p: FieldPair, q: FieldPair, alpha_inv: MatrixField, mu_inv: MatrixField) -> complex:
    """``int (alpha^{-1} u1, u2) + (mu^{-1} v1, v2) dx`` by nodal quadrature."""
    grid = p.grid
    for other in (q.grid, alpha_inv.grid, mu_inv.grid):
        grid.require_same(other)
    return inner(alpha_inv.apply(p.u), q.u, grid) + inner(mu_inv.apply(p.v), q.v, grid)


# ---------------------------------------------------------------------------
# Binary dumps
# ---------------------------------------------------------------------------

MAGIC = b"CURLHOM1"
HEADER_BYTES = 64
_HEADER = struct.Struct("<8s I I 3I I d 24x")  # 64 bytes
_GEOMETRY = struct.Struct("<9d 3d")  # basis rows, then origin


def dump_field(path, values: np.ndarray, grid: PeriodicGrid) -> Path:
    """Write a field in the ``CURLHOM1`` little-endian layout (see README)."""
    values = np.asarray(values)
    _check_shape(values, grid, vector=False)
    ncomp = int(np.prod(values.shape[:-3], dtype=int)) if values.ndim > 3 else 1
    radius = getattr(grid, "support_radius", 0.0)
    head = _HEADER.pack(MAGIC, grid.kind_code, ncomp, *grid.shape, grid.stencil_order, radius)
    geom = _GEOMETRY.pack(*grid.basis.ravel(), *grid.origin)
    data = np.moveaxis(values.reshape((ncomp,) + grid.shape), 0, -1).astype("<c16")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(geom)
        fh.write(np.ascontiguousarray(data).tobytes())
    return path


def load_field(path) -> tuple[np.ndarray, PeriodicGrid]:
    """Read a ``CURLHOM1`` dump; returns ``(values, grid)`` with components first."""
    raw = Path(path).read_bytes()
    magic, kind, ncomp, n1, n2, n3, order, radius = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a CURLHOM1 field dump")
    geom = _GEOMETRY.unpack_from(raw, HEADER_BYTES)
    basis = np.array(geom[:9]).reshape(3, 3)
    shape = (n1, n2, n3)
    if kind == CellGrid.kind_code:
        grid: PeriodicGrid = CellGrid(shape, Lattice(basis))
    elif kind == MacroGrid.kind_code:
        grid = MacroGrid(shape, basis[0, 0], radius, "spectral" if order == 0 else f"fd{order}")
    else:
        raise ValueError(f"{path}: unknown grid kind {kind}")
    offset = HEADER_BYTES + _GEOMETRY.size
    data = np.frombuffer(raw, dtype="<c16", offset=offset, count=ncomp * n1 * n2 * n3)
    values = np.moveaxis(data.reshape(shape + (ncomp,)), -1, 0).copy()
    if ncomp == 1:
        values = values[0]
    return values, grid


# ---------------------------------------------------------------------------
# Trigonometric interpolation
# ---------------------------------------------------------------------------


def trig_interp_matrix(n: int, frac: np.ndarray) -> np.ndarray:
    """Rows evaluating the band-limited interpolant of ``n`` periodic samples.

    ``frac`` holds points in fractional coordinates (period 1).  The Nyquist
    mode is split symmetrically so the interpolant of real data is real; at
    grid points the rows are unit vectors up to round-off.
    """
    frac = np.asarray(frac, dtype=float).reshape(-1)
    m = np.arange(-(n // 2), n // 2 + 1)
    w = np.ones(m.size)
    w[0] = w[-1] = 0.5
    nodes = np.arange(n) / n
    phase = 2.0 * np.pi * m[None, None, :] * (frac[:, None, None] - nodes[None, :, None])
    return np.sum(w * np.cos(phase), axis=-1) / n


def fourier_resample(values: np.ndarray, grid: PeriodicGrid, shape) -> np.ndarray:
    """Band-limited resampling of ``values`` from ``grid`` onto ``shape`` nodes.

    Both samplings share the same box and first node.  The Nyquist mode of
    the source is split symmetrically, so resampling to a finer grid and
    back reproduces the input.
    """
    shape = tuple(int(n) for n in shape)
    src = grid.shape
    hat = sfft.fftn(values, axes=_AXES)
    for ax, (n_src, n_dst) in enumerate(zip(src, shape)):
        axis = ax - 3
        if n_dst == n_src:
            continue
        if n_dst < n_src:
            raise ValueError("fourier_resample only refines")
        half = n_src // 2
        hat = np.moveaxis(hat, axis, 0)
        out = np.zeros((n_dst,) + hat.shape[1:], dtype=complex)
        out[:half] = hat[:half]
        out[-half + 1:] = hat[-half + 1:]
        out[half] = 0.5 * hat[half]
        out[-half] = 0.5 * hat[half]
        hat = np.moveaxis(out, 0, axis)
    scale = np.prod(shape) / np.prod(src)
    res = sfft.ifftn(hat, axes=_AXES) * scale
    return res.real if not np.iscomplexobj(values) else res

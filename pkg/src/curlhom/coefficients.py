"""Two-scale coefficient models alpha(x, y), mu(x, y) and their validation.

Built-in families share one structure: a periodic cell pattern ``B(s, y)``
blended into the identity through a scalar ``s = chi(|x| / R_p)``, where
``chi`` is a smooth radial profile equal to 1 at the origin and vanishing
for ``|x| >= R_p``.  ``B(0, y) = I`` for every blended family, so the model
is the identity outside the ball of radius ``R_p <= R`` exactly.

Patterns are written in fractional cell coordinates, which makes lattice
periodicity hold by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import CellGrid, Lattice, MatrixField, PeriodicGrid

__all__ = [
    "RadialProfile",
    "CoefficientModel",
    "ValidationReport",
    "builtin",
    "sample_cell",
    "sample_on_grid",
    "validate",
    "random_smooth_spd",
    "FAMILIES",
]

FAMILIES = ("identity", "laminate", "inclusion", "separable")


def _flat_exp(z: np.ndarray) -> np.ndarray:
    """``exp(-1/z)`` for ``z > 0`` and 0 otherwise (smooth, all derivatives vanish at 0)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = np.exp(-1.0 / z[pos])
    return out


@dataclass(frozen=True)
class RadialProfile:
    """Smooth cutoff ``chi(t)`` with ``chi = 1`` for ``t <= plateau`` and ``chi = 0`` for ``t >= 1``.

    ``shape="smoothstep"`` uses ``h(1-t') / (h(1-t') + h(t'))`` with
    ``h(z) = exp(-1/z)`` and ``t' = (t - plateau) / (1 - plateau)``.
    ``shape="bump"`` uses ``exp(1 - 1/(1 - t'^2))``.  Both are infinitely
    differentiable; the smoothstep has a much smaller spectral tail and is
    the default.
    """

    plateau: float = 0.0
    shape: str = "smoothstep"

    def __post_init__(self):
        if not 0.0 <= self.plateau < 1.0:
            raise ValueError("profile plateau must lie in [0, 1)")
        if self.shape not in ("smoothstep", "bump"):
            raise ValueError(f"unknown profile shape {self.shape!r}")

    def __call__(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        tp = np.clip((t - self.plateau) / (1.0 - self.plateau), 0.0, 1.0)
        if self.shape == "smoothstep":
            num = _flat_exp(1.0 - tp)
            return num / (num + _flat_exp(tp))
        out = np.zeros_like(tp)
        inside = tp < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - tp[inside] ** 2))
        return out


Pattern = Callable[[np.ndarray, np.ndarray], np.ndarray]


class CoefficientModel:
    """Coefficient ``beta(x, y)``, real symmetric positive definite and periodic in ``y``.

    Parameters
    ----------
    pattern : callable
        ``pattern(s, frac)`` with ``s`` of shape ``S`` and fractional cell
        coordinates ``frac`` of shape ``S + (3,)`` (broadcasting allowed).
        Returns shape ``S`` for isotropic models, otherwise ``S + (3, 3)``.
    support_radius : float
        Declared radius ``R``: the model is the identity for ``|x| >= R``.
    profile_radius : float, optional
        Radius ``R_p <= R`` of the blending profile (default ``R``).
    profile : RadialProfile
    lattice : Lattice
    isotropic : bool
    floor : float
        Declared ellipticity floor ``m0``.
    identity_outside : bool
        Whether ``pattern(0, y) = I``; false only for the separable family.
    blend : callable, optional
        Custom ``s(x)``; when given, ``profile`` is ignored.  Must accept
        arrays of shape ``S + (3,)`` and return shape ``S``.
    """

    def __init__(
        self,
        pattern: Pattern,
        support_radius: float,
        *,
        profile_radius: float | None = None,
        profile: RadialProfile | None = None,
        lattice: Lattice | None = None,
        isotropic: bool = True,
        floor: float = 0.0,
        identity_outside: bool = True,
        label: str = "custom",
        params: dict | None = None,
        blend: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if support_radius <= 0:
            raise ValueError("support radius must be positive")
        self.pattern = pattern
        self.support_radius = float(support_radius)
        self.profile_radius = float(support_radius if profile_radius is None else profile_radius)
        if not 0 < self.profile_radius <= self.support_radius:
            raise ValueError("profile radius must lie in (0, R]")
        self.profile = profile or RadialProfile()
        self.lattice = lattice or Lattice()
        self.isotropic = isotropic
        self.floor = float(floor)
        self.identity_outside = identity_outside
        self.label = label
        self.params = dict(params or {})
        self._blend = blend

    # -- evaluation ---------------------------------------------------------
    def blend(self, x) -> np.ndarray:
        """Blending scalar ``s(x)`` in ``[0, 1]``; ``x`` has shape ``S + (3,)``."""
        x = np.asarray(x, dtype=float)
        if self._blend is not None:
            return np.asarray(self._blend(x), dtype=float)
        return self.profile(np.linalg.norm(x, axis=-1) / self.profile_radius)

    def pattern_values(self, s, frac) -> np.ndarray:
        return np.asarray(self.pattern(np.asarray(s, dtype=float), np.asarray(frac, dtype=float)), dtype=float)

    def evaluator(self, x, y) -> np.ndarray:
        """Full matrices ``beta(x, y)``, shape ``broadcast(x, y)[:-1] + (3, 3)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = self.blend(x)
        vals = self.pattern_values(s, self.lattice.fractional(y))
        if self.isotropic:
            return vals[..., None, None] * np.eye(3)
        return vals

    __call__ = evaluator

    def is_constant_in_x(self) -> bool:
        return self.label == "identity"

    def __repr__(self) -> str:
        return f"CoefficientModel({self.label!r}, R={self.support_radius:g}, R_p={self.profile_radius:g}, params={self.params})"


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------


def _periodic_gaussian(frac: np.ndarray, width: float) -> np.ndarray:
    """Smooth periodic bump centred in the cell, value 1 at the centre."""
    arg = np.sum(1.0 - np.cos(2.0 * np.pi * (frac - 0.5)), axis=-1)
    return np.exp(-arg / (2.0 * np.pi**2 * width**2))


def builtin(family: str, support_radius: float = 0.45, **params) -> CoefficientModel:
    """Construct a built-in coefficient family.

    Parameters
    ----------
    family : {"identity", "laminate", "inclusion", "separable"}
    support_radius : float
        Declared radius ``R``.
    **params
        Common: ``profile_radius`` (default ``R``), ``plateau`` (default 0),
        ``profile`` (``"smoothstep"`` or ``"bump"``), ``lattice`` (3x3 basis).

        laminate: ``midpoint`` (2.0), ``amplitude`` (1.0, ``< midpoint``),
        ``direction`` (1, 2 or 3).  Cell pattern
        ``a(y) = midpoint + amplitude sin(2 pi y_d)``.

        inclusion: ``radius`` (0.25, > 0), ``contrast`` (5.0, > 0).  Cell
        pattern ``1 + (contrast - 1) w(y)`` with ``w`` a periodic Gaussian
        bump of the given width.

        separable: ``scale`` (1.0, > -1), ``midpoint`` (2.0), ``amplitude``
        (1.0).  ``(1 + scale chi) b(y)`` with ``b`` a laminate pattern;
        not the identity outside the ball.
    """
    params = dict(params)
    lattice = Lattice(params.pop("lattice")) if "lattice" in params else Lattice()
    profile_radius = float(params.pop("profile_radius", support_radius))
    profile = RadialProfile(float(params.pop("plateau", 0.0)), str(params.pop("profile", "smoothstep")))
    common = dict(profile_radius=profile_radius, profile=profile, lattice=lattice)

    def take(name, default):
        return float(params.pop(name, default))

    if family == "identity":
        pattern = lambda s, frac: np.ones(np.broadcast_shapes(np.shape(s), np.shape(frac)[:-1]))  # noqa: E731
        model = CoefficientModel(pattern, support_radius, floor=1.0, label="identity", **common)
    elif family in ("laminate", "separable"):
        midpoint = take("midpoint", 2.0)
        amplitude = take("amplitude", 1.0)
        direction = int(params.pop("direction", 1))
        scale = take("scale", 1.0) if family == "separable" else None
        if direction not in (1, 2, 3):
            raise ValueError("laminate direction must be 1, 2 or 3")
        if not 0.0 <= abs(amplitude) < midpoint:
            raise ValueError("laminate needs |amplitude| < midpoint for positivity")
        axis = direction - 1
        if family == "laminate":

            def pattern(s, frac):
                cell = midpoint + amplitude * np.sin(2.0 * np.pi * frac[..., axis])
                return (1.0 - s) + s * cell

            floor = min(1.0, midpoint - abs(amplitude))
            model = CoefficientModel(pattern, support_radius, floor=floor, label="laminate", **common)
        else:
            if scale <= -1.0:
                raise ValueError("separable scale must exceed -1")

            def pattern(s, frac):
                cell = midpoint + amplitude * np.sin(2.0 * np.pi * frac[..., axis])
                return (1.0 + scale * s) * cell

            floor = min(1.0, 1.0 + scale) * (midpoint - abs(amplitude))
            model = CoefficientModel(
                pattern, support_radius, floor=floor, identity_outside=False, label="separable", **common
            )
        model.params.update(midpoint=midpoint, amplitude=amplitude, direction=direction)
        if scale is not None:
            model.params["scale"] = scale
    elif family == "inclusion":
        width = take("radius", 0.25)
        contrast = take("contrast", 5.0)
        if width <= 0 or contrast <= 0:
            raise ValueError("inclusion needs radius > 0 and contrast > 0")

        def pattern(s, frac):
            return 1.0 + s * (contrast - 1.0) * _periodic_gaussian(frac, width)

        model = CoefficientModel(pattern, support_radius, floor=min(1.0, contrast), label="inclusion", **common)
        model.params.update(radius=width, contrast=contrast)
    else:
        raise ValueError(f"unknown coefficient family {family!r}; choose from {FAMILIES}")
    if params:
        raise ValueError(f"unknown parameters for {family}: {sorted(params)}")
    model.params.update(profile_radius=profile_radius, plateau=profile.plateau, profile=profile.shape)
    return model


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_cell(model: CoefficientModel, x, grid: CellGrid, *, s: float | None = None) -> MatrixField:
    """``y -> model(x, y)`` on the cell grid; SPD is verified on the fly.

    ``s`` overrides the blending scalar (used for the blending-node tables).
    """
    if not isinstance(grid, CellGrid) or grid.lattice != model.lattice:
        raise ValueError("cell grid lattice differs from the model lattice")
    blend = float(model.blend(np.asarray(x, dtype=float))) if s is None else float(s)
    frac = np.moveaxis(grid.nodes(), 0, -1) @ grid.lattice.reciprocal.T
    vals = model.pattern_values(blend, frac)
    if model.isotropic:
        return MatrixField(grid, vals, isotropic=True)
    return MatrixField(grid, np.moveaxis(vals, (-2, -1), (0, 1)))


def sample_on_grid(model: CoefficientModel, grid: PeriodicGrid, epsilon: float) -> MatrixField:
    """``x -> model(x, x / epsilon)`` on a macro grid."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.moveaxis(grid.nodes(), 0, -1)
    s = model.blend(x)
    frac = model.lattice.fractional(x / epsilon)
    vals = model.pattern_values(s, frac)
    if model.isotropic:
        return MatrixField(grid, vals, isotropic=True)
    return MatrixField(grid, np.moveaxis(vals, (-2, -1), (0, 1)))


def random_smooth_spd(grid: CellGrid, rng: np.random.Generator, *, modes: int = 2, floor: float = 0.5,
                      strength: float = 1.0) -> MatrixField:
    """Random band-limited SPD field ``floor I + G G^T`` with ``G`` a trigonometric polynomial."""
    frac = [grid.axis_fractions(a) for a in range(3)]
    g = np.zeros((3, 3) + grid.shape)
    for kx in range(-modes, modes + 1):
        for ky in range(-modes, modes + 1):
            for kz in range(-modes, modes + 1):
                amp = strength * rng.standard_normal((3, 3)) / (1.0 + kx * kx + ky * ky + kz * kz)
                phase = rng.uniform(0, 2 * np.pi)
                wave = np.cos(
                    2 * np.pi * (kx * frac[0][:, None, None] + ky * frac[1][None, :, None] + kz * frac[2][None, None, :])
                    + phase
                )
                g += amp[:, :, None, None, None] * wave
    vals = np.einsum("ikxyz,jkxyz->ijxyz", g, g) + floor * np.eye(3)[:, :, None, None, None]
    return MatrixField(grid, 0.5 * (vals + np.swapaxes(vals, 0, 1)))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    label: str
    min_eigenvalue: float
    declared_floor: float
    max_asymmetry: float
    max_periodicity_defect: float
    max_identity_defect: float
    smoothness_ratio: float
    sample_count: int
    tolerance: float = 1e-10
    notes: list[str] = field(default_factory=list)

    @property
    def flags(self) -> dict[str, bool]:
        return {
            "positive_definite": self.min_eigenvalue > 0.0
            and self.min_eigenvalue >= self.declared_floor - self.tolerance,
            "symmetric": self.max_asymmetry <= self.tolerance,
            "periodic": self.max_periodicity_defect <= self.tolerance,
            "identity_outside": self.max_identity_defect <= self.tolerance,
        }

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "min_eigenvalue": self.min_eigenvalue,
            "declared_floor": self.declared_floor,
            "max_asymmetry": self.max_asymmetry,
            "max_periodicity_defect": self.max_periodicity_defect,
            "max_identity_defect": self.max_identity_defect,
            "smoothness_ratio": self.smoothness_ratio,
            "sample_count": self.sample_count,
            "flags": self.flags,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def validate(model: CoefficientModel, sample_counts=(8, 8), *, tolerance: float = 1e-10) -> ValidationReport:
    """Sample ``model`` and report ellipticity, symmetry, periodicity and support defects.

    Parameters
    ----------
    sample_counts : (int, int)
        Samples per axis for ``x`` (cube ``[-1.25R, 1.25R]^3``) and for ``y``
        (fundamental cell); each must be at least 8.
    """
    nx, ny = (int(c) for c in np.broadcast_to(np.asarray(sample_counts), (2,)))
    if nx < 8 or ny < 8:
        raise ValueError("validation needs at least 8 samples per axis")
    R = model.support_radius
    xs = np.linspace(-1.25 * R, 1.25 * R, nx)
    X = np.stack(np.meshgrid(xs, xs, xs, indexing="ij"), axis=-1).reshape(-1, 3)
    t = (np.arange(ny) + 0.37) / ny
    F = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    Y = F @ model.lattice.basis

    min_eig = np.inf
    asym = 0.0
    per = 0.0
    ident = 0.0
    outside = np.linalg.norm(X, axis=1) >= R
    for i, x in enumerate(X):
        vals = model.evaluator(x[None, :], Y)
        asym = max(asym, float(np.abs(vals - np.swapaxes(vals, -1, -2)).max()))
        sym = 0.5 * (vals + np.swapaxes(vals, -1, -2))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(sym)[..., 0].min()))
        for a in model.lattice.basis:
            shifted = model.evaluator(x[None, :], Y + a)
            per = max(per, float(np.abs(shifted - vals).max()))
        if outside[i]:
            ident = max(ident, float(np.abs(vals - np.eye(3)).max()))

    # Smoothness proxy: second differences in y at step h and h/2 scale by ~4.
    x0 = np.zeros((1, 3))
    y0 = Y[: min(len(Y), 64)]
    ratios = []
    for e in np.eye(3):
        h = 1e-2
        d2 = [
            np.abs(model.evaluator(x0, y0 + hh * e) - 2 * model.evaluator(x0, y0) + model.evaluator(x0, y0 - hh * e)).max()
            for hh in (h, h / 2)
        ]
        if d2[1] > 1e-13:
            ratios.append(d2[0] / d2[1])
    smooth = float(np.median(ratios)) if ratios else 4.0
    notes = ["smoothness is a finite-difference proxy (ratio near 4 for C^2 data), not a certificate"]
    if not model.identity_outside:
        notes.append("family is not the identity outside the support ball by design")
    return ValidationReport(
        label=model.label,
        min_eigenvalue=min_eig,
        declared_floor=model.floor,
        max_asymmetry=asym,
        max_periodicity_defect=per,
        max_identity_defect=ident if outside.any() else 0.0,
        smoothness_ratio=smooth,
        sample_count=len(X) * len(Y),
        tolerance=tolerance,
        notes=notes,
    )

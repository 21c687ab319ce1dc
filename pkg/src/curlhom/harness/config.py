"""Scenario configuration: INI-style sections with a fixed, strictly checked schema.

Example::

    [scenario]
    name = laminate
    order = 2
    epsilons = 1/4, 1/8, 1/16
    spectral_shift = 1j
    output = out/laminate

    [geometry]
    support_radius = 0.45
    side = 1.0
    profile_radius = 0.32

    [alpha]
    family = laminate
    midpoint = 2.0
    amplitude = 0.5

    [mu]
    family = laminate
    midpoint = 1.5
    amplitude = 0.25

    [grids]
    cell = 32, 4, 4
    macro = 64
    fine_min = 64
    nodes_per_period = 8
    closure_macro = 32
    closure_stencil = fd4

    [solver]
    resolvent_tolerance = 1e-10
    cell_tolerance = 1e-12
    hat_tolerance = 1e-12
    blend_nodes = 13

Every key has a default except ``scenario.name`` and ``alpha.family``;
a missing ``[mu]`` section copies ``[alpha]``.  Family parameters in
``[alpha]``/``[mu]`` are passed to :func:`curlhom.coefficients.builtin`.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from ..coefficients import FAMILIES

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "parse_epsilons", "format_config"]


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


_FAMILY_KEYS = {
    "identity": (),
    "laminate": ("midpoint", "amplitude", "direction"),
    "separable": ("midpoint", "amplitude", "direction", "scale"),
    "inclusion": ("radius", "contrast"),
}
_COMMON_MODEL_KEYS = ("plateau", "profile")


def parse_epsilons(text: str) -> tuple[Fraction, ...]:
    """``"1/4, 1/8"`` -> ``(Fraction(1, 4), Fraction(1, 8))``; each must be ``1/m``."""
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        try:
            value = Fraction(item).limit_denominator(10**6)
        except ValueError as exc:
            raise ConfigError(f"cannot parse epsilon {item!r}") from exc
        if not 0 < value < 1 or value.numerator != 1:
            raise ConfigError(f"epsilon {item!r} must be a reciprocal integer 1/m with m >= 2")
        out.append(value)
    return tuple(out)


def _ints(text: str) -> tuple[int, ...]:
    vals = tuple(int(t) for t in text.replace(",", " ").split())
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3:
        raise ConfigError(f"expected one or three integers, got {text!r}")
    return vals


@dataclass(frozen=True)
class ScenarioConfig:
    """All inputs of one convergence study."""

    name: str
    alpha: dict
    mu: dict
    order: int = 2
    epsilons: tuple = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))
    spectral_shift: complex = 1j
    output: str = "out"
    support_radius: float = 0.45
    side: float = 1.0
    profile_radius: float = 0.32
    cell: tuple = (24, 24, 24)
    macro: int = 64
    macro_stencil: str = "spectral"
    fine_min: int = 64
    nodes_per_period: int = 8
    closure_macro: int = 32
    closure_stencil: str = "fd4"
    closure_epsilon: Fraction = Fraction(1, 4)
    resolvent_tolerance: float = 1e-10
    cell_tolerance: float = 1e-12
    hat_tolerance: float = 1e-12
    blend_nodes: int = 13
    sections: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not complex(self.spectral_shift).imag > 0:
            raise ConfigError("spectral_shift must have a positive imaginary part")
        if not self.side > 2 * self.support_radius:
            raise ConfigError("box side must exceed twice the support radius")
        if not 0 < self.profile_radius <= self.support_radius:
            raise ConfigError("profile_radius must lie in (0, support_radius]")
        if self.order < 2:
            raise ConfigError("expansion order must be at least 2 (errors are reported through order - 2)")
        for eps in self.epsilons:
            if not 0 < eps < 1:
                raise ConfigError(f"epsilon {eps} outside (0, 1)")
        for name in ("alpha", "mu"):
            entries = getattr(self, name)
            family = entries.get("family")
            if family not in FAMILIES:
                raise ConfigError(f"[{name}] family must be one of {FAMILIES}, got {family!r}")
            allowed = set(_FAMILY_KEYS[family]) | set(_COMMON_MODEL_KEYS) | {"family"}
            unknown = set(entries) - allowed
            if unknown:
                raise ConfigError(f"[{name}] unknown keys for family {family!r}: {sorted(unknown)}")

    @property
    def through_order(self) -> int:
        return self.order - 2

    @property
    def tolerance(self) -> float:
        return self.resolvent_tolerance

    def fine_resolution(self, epsilon) -> int:
        """Smallest admissible fine resolution for ``epsilon``.

        At least ``fine_min`` and ``nodes_per_period`` nodes per period,
        even, and a multiple of ``side / epsilon`` so that cell nodes align.
        """
        periods = Fraction(self.side).limit_denominator(10**6) / Fraction(epsilon)
        if periods.denominator != 1:
            raise ConfigError(f"side / epsilon = {periods} is not an integer")
        periods = int(periods)
        need = max(self.fine_min, self.nodes_per_period * periods)
        step = periods if periods % 2 == 0 else 2 * periods
        return int(-(-need // step) * step)

    def model_params(self, which: str) -> tuple[str, dict]:
        entries = dict(getattr(self, which))
        family = entries.pop("family")
        params = {}
        for k, v in entries.items():
            if k == "profile":
                params[k] = str(v)
            elif k == "direction":
                params[k] = int(v)
            else:
                params[k] = float(v)
        params["profile_radius"] = self.profile_radius
        return family, params

    def with_overrides(self, *, epsilons=None, order=None, output=None) -> "ScenarioConfig":
        changes = {}
        if epsilons is not None:
            changes["epsilons"] = tuple(epsilons)
        if order is not None:
            changes["order"] = int(order)
        if output is not None:
            changes["output"] = str(output)
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "sections":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [str(x) if isinstance(x, Fraction) else x for x in v]
            elif isinstance(v, Fraction):
                v = str(v)
            elif isinstance(v, complex):
                v = _format_complex(v)
            elif isinstance(v, dict):
                v = dict(v)
            out[f.name] = v
        return out


# section -> key -> (attribute, parser)
_SCHEMA = {
    "scenario": {
        "name": ("name", str),
        "order": ("order", int),
        "epsilons": ("epsilons", parse_epsilons),
        "spectral_shift": ("spectral_shift", complex),
        "output": ("output", str),
    },
    "geometry": {
        "support_radius": ("support_radius", float),
        "side": ("side", float),
        "profile_radius": ("profile_radius", float),
    },
    "grids": {
        "cell": ("cell", _ints),
        "macro": ("macro", int),
        "macro_stencil": ("macro_stencil", str),
        "fine_min": ("fine_min", int),
        "nodes_per_period": ("nodes_per_period", int),
        "closure_macro": ("closure_macro", int),
        "closure_stencil": ("closure_stencil", str),
        "closure_epsilon": ("closure_epsilon", lambda t: parse_epsilons(t)[0]),
    },
    "solver": {
        "resolvent_tolerance": ("resolvent_tolerance", float),
        "cell_tolerance": ("cell_tolerance", float),
        "hat_tolerance": ("hat_tolerance", float),
        "blend_nodes": ("blend_nodes", int),
    },
}
_MODEL_SECTIONS = ("alpha", "mu")


def parse_config(text: str) -> ScenarioConfig:
    """Parse configuration text, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(parser.sections()) - set(_SCHEMA) - set(_MODEL_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    kwargs = {}
    for section, keys in _SCHEMA.items():
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key [{section}] {key}")
            attr, conv = keys[key]
            try:
                kwargs[attr] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {value!r} ({exc})") from exc
    if "name" not in kwargs:
        raise ConfigError("[scenario] name is required")
    if not parser.has_section("alpha"):
        raise ConfigError("[alpha] section is required")
    alpha = dict(parser.items("alpha"))
    mu = dict(parser.items("mu")) if parser.has_section("mu") else dict(alpha)
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return ScenarioConfig(alpha=alpha, mu=mu, sections=sections, **kwargs)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _format_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real!r}+{z.imag!r}j" if z.real else f"{z.imag!r}j"


def _format_value(v) -> str:
    if isinstance(v, complex):
        return _format_complex(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def format_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config(format_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in _SCHEMA.items():
        parser.add_section(section)
        for key, (attr, _) in keys.items():
            parser.set(section, key, _format_value(getattr(cfg, attr)))
    for section in _MODEL_SECTIONS:
        parser.add_section(section)
        for key, value in getattr(cfg, section).items():
            parser.set(section, key, str(value))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

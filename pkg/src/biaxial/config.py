"""Run configuration: a flat ``key = value`` text format with ``#`` comments.

Every key has a default, so a file only needs the keys it changes. ``write_config``
emits all keys in canonical order and ``parse_config(write_config(c)) == c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .energy import FrankConstants
from .errors import ParseError, ValidationError
from .fields import GridSpec
from .initial import RECIPES

MODES = ("minimize", "flow2d", "check", "ellipticity", "bubble-probe")
BOUNDARIES = ("periodic", "dirichlet")
PROFILES = ("linear", "product")


@dataclass
class RunConfig:
    mode: str = "flow2d"
    ndim: int = 2
    nx: int = 64
    ny: int = 64
    nz: int = 16
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    lz: float = 1.0
    boundary: str = "periodic"
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    k4: float = 1.0
    k5: float = 1.0
    k6: float = 1.0
    k7: float = 0.0
    k8: float = 0.0
    k9: float = 0.0
    k10: float = 0.0
    k11: float = 0.0
    k12: float = 0.0
    nu: float = 1.0
    dt: float = 1e-3
    horizon: float = 0.5
    seed: int = 0
    recipe: str = "taylor-green"
    wave_a: float = 1.0
    wave_profile: str = "linear"
    bump_width: float = 0.2
    vortex_strength: float = 1.0
    smooth_amplitude: float = 0.5
    out: str = "out"
    snapshot_every: int = 100
    eps0_sq: float = 0.05
    theta0: float = 0.25
    c0: float = 8 * math.pi
    scan_radii: tuple = ()
    concentration_radius: float = 0.5
    tau: float | None = None
    max_iter: int = 5000
    tol: float = 1e-6
    retraction: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "float" and isinstance(v, int) and not isinstance(v, bool):
                setattr(self, f.name, float(v))
        if self.tau is not None:
            self.tau = float(self.tau)
        self.scan_radii = tuple(float(r) for r in self.scan_radii)
        self.validate()

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ValidationError(f"{name}: {msg}", name)

        need(self.mode in MODES, "mode", f"must be one of {', '.join(MODES)}")
        need(self.ndim in (2, 3), "ndim", "must be 2 or 3")
        for name in ("nx", "ny", "nz"):
            need(getattr(self, name) >= 4, name, "must be >= 4")
        for name in ("lx", "ly", "lz", "nu", "dt", "horizon", "tol", "eps0_sq", "c0",
                     "concentration_radius", "bump_width"):
            v = getattr(self, name)
            need(math.isfinite(v) and v > 0, name, "must be finite and > 0")
        need(self.boundary in BOUNDARIES, "boundary", "must be periodic or dirichlet")
        need(0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        need(self.recipe in RECIPES, "recipe", f"must be one of {', '.join(RECIPES)}")
        need(self.wave_profile in PROFILES, "wave_profile", "must be linear or product")
        need(bool(self.out) and self.out == self.out.strip() and not set("#\n") & set(self.out),
             "out", "must be a non-empty path without '#', newlines or edge spaces")
        need(self.snapshot_every >= 0, "snapshot_every", "must be >= 0")
        need(0 < self.theta0 < 1, "theta0", "must lie in (0, 1)")
        need(self.max_iter >= 0, "max_iter", "must be >= 0")
        need(all(math.isfinite(r) and r > 0 for r in self.scan_radii), "scan_radii", "must be > 0")
        need(self.tau is None or (math.isfinite(self.tau) and self.tau > 0), "tau", "must be > 0 or auto")
        for name in ("wave_a", "vortex_strength", "smooth_amplitude"):
            need(math.isfinite(getattr(self, name)), name, "must be finite")
        self.frank()

    def frank(self) -> FrankConstants:
        return FrankConstants(tuple(getattr(self, f"k{i}") for i in range(1, 13)))

    def grid(self) -> GridSpec:
        dims = (self.nx, self.ny, self.nz)[: self.ndim]
        lengths = (self.lx, self.ly, self.lz)[: self.ndim]
        return GridSpec(dims, tuple(L / d for L, d in zip(lengths, dims)), self.boundary)

    def recipe_params(self) -> dict:
        return {k: getattr(self, k) for k in
                ("wave_a", "wave_profile", "bump_width", "vortex_strength", "smooth_amplitude")}


KEYS = tuple(f.name for f in fields(RunConfig))
_DEFAULTS = RunConfig()


def _kind(name):
    return type(getattr(_DEFAULTS, name)) if name != "tau" else "tau"


def _parse_value(name, raw):
    kind = _kind(name)
    if kind is bool:
        if raw not in ("true", "false"):
            raise ValueError("expected true or false")
        return raw == "true"
    if kind is int:
        return int(raw, 10)
    if kind is float:
        return float(raw)
    if kind == "tau":
        return None if raw == "auto" else float(raw)
    if kind is tuple:
        return tuple(float(p) for p in raw.split(",")) if raw.strip() else ()
    return raw


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno) from None
    return RunConfig(**values)


def write_config(config: RunConfig) -> str:
    return "".join(f"{k} = {_format_value(getattr(config, k))}\n" for k in KEYS)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

"""Initial-data recipes. Every velocity is passed through the discrete projection."""

from __future__ import annotations

import numpy as np

from .errors import UnknownRecipe, ValidationError
from .fields import (
    DirectorPairField,
    GridSpec,
    VectorField2D,
    frame_from_rotations,
    gradient,
    rotation_matrices,
)
from .rng import SplitMix64

RECIPES = ("constant", "circle-wave", "taylor-green", "random-smooth", "vortex-pair", "concentrated-bump")

DEFAULTS = {
    "wave_a": 1.0,
    "wave_profile": "linear",
    "bump_width": 0.2,
    "vortex_strength": 1.0,
    "smooth_amplitude": 0.5,
}

# highest integer wave index used by random-smooth
SMOOTH_MODES = 3


def _offsets(grid: GridSpec, center):
    """Node displacements from ``center``; periodic axes use the nearest image."""
    out = []
    for a, x in enumerate(grid.coords()):
        d = x - center[a]
        if grid.periodic(a):
            L = grid.lengths[a]
            d = (d + 0.5 * L) % L - 0.5 * L
        out.append(d)
    return out


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def circle_wave(grid: GridSpec, a=1.0, profile="linear"):
    """``n = (cos t, sin t, 0)``, ``m = e3`` with ``t = a x`` or ``a sin(2 pi x/Lx) sin(2 pi y/Ly)``."""
    x = grid.coords()
    if profile == "linear":
        if grid.periodic(0):
            turns = a * grid.lengths[0] / (2 * np.pi)
            if abs(turns - round(turns)) > 1e-9:
                raise ValidationError("linear wave must wind a whole number of times", "wave_a")
        theta = a * x[0]
    elif profile == "product":
        Lx, Ly = grid.lengths[:2]
        theta = a * np.sin(2 * np.pi * x[0] / Lx) * np.sin(2 * np.pi * x[1] / Ly)
    else:
        raise ValidationError(f"unknown wave profile {profile!r}", "wave_profile")
    zero = np.zeros_like(theta)
    n = np.stack([np.cos(theta), np.sin(theta), zero])
    m = np.stack([zero, zero, zero + 1.0])
    return DirectorPairField(grid, n, m)


def concentrated_bump(grid: GridSpec, width):
    """Rotation bubble ``R = exp(phi(s) [a]x)`` about the in-plane radial axis ``a``.

    ``phi = 4 arctan(s / width)`` near the center, blended to ``2 pi`` (identity) before
    the nearest face so the field is constant on the boundary.
    """
    if not width > 0:
        raise ValidationError("bump width must be > 0", "bump_width")
    center = [0.5 * L for L in grid.lengths]
    d = _offsets(grid, center)
    if grid.ndim == 2:
        d.append(np.zeros_like(d[0]))
    s = np.sqrt(sum(c * c for c in d))
    rho = 0.45 * min(grid.lengths)
    phi = 4.0 * np.arctan(s / width)
    phi = phi + (2.0 * np.pi - phi) * _smoothstep((s - 0.5 * rho) / (0.5 * rho))
    safe = np.where(s > 0, s, 1.0)
    omega = np.stack([phi * c / safe for c in d])
    n, m = frame_from_rotations(rotation_matrices(omega))
    return DirectorPairField(grid, n, m).retracted()


def _modes(grid, rng, amplitude, ncomp):
    """Smooth random sums of Fourier modes with ``1/(1+|k|^2)`` decay."""
    x = grid.coords()
    idx = np.arange(-SMOOTH_MODES, SMOOTH_MODES + 1)
    mesh = np.meshgrid(*([idx] * grid.ndim), indexing="ij")
    ks = np.stack([g.ravel() for g in mesh], axis=1)
    ks = ks[np.any(ks != 0, axis=1)]
    coef = rng.normal((ncomp, len(ks), 2))
    out = np.zeros((ncomp,) + grid.shape)
    for j, k in enumerate(ks):
        arg = sum(2 * np.pi * k[a] * x[a] / grid.lengths[a] for a in range(grid.ndim))
        decay = 1.0 / (1.0 + float(k @ k))
        c, s = np.cos(arg), np.sin(arg)
        for i in range(ncomp):
            out[i] += decay * (coef[i, j, 0] * c + coef[i, j, 1] * s)
    return amplitude * out


def _wall_window(grid):
    w = np.ones(grid.shape)
    for a, x in enumerate(grid.coords()):
        if not grid.periodic(a):
            w = w * np.sin(np.pi * x / grid.lengths[a]) ** 2
    return w


def _from_stream(grid, psi):
    g = gradient(psi * _wall_window(grid), grid)
    return np.stack([g[1], -g[0]])


def _project(grid, u):
    from .hydro import pressure_projection

    u = u * grid.interior_mask()
    out, _ = pressure_projection(VectorField2D(grid, u))
    return out


def _velocity(grid, u):
    if grid.ndim != 2:
        return None
    return _project(grid, np.asarray(u, float))


def generate_initial(recipe, seed, grid: GridSpec, params=None):
    """Admissible initial data ``(u0, directors)``.

    ``u0`` is a projected ``VectorField2D`` on 2-D grids and ``None`` on 3-D grids.
    Deterministic for a given seed.
    """
    p = dict(DEFAULTS)
    if params:
        p.update({k: v for k, v in params.items() if k in DEFAULTS})
    if recipe not in RECIPES:
        raise UnknownRecipe(f"unknown recipe {recipe!r}; choose from {', '.join(RECIPES)}")
    rng = SplitMix64(seed)
    zero = np.zeros((2,) + grid.shape)

    if recipe == "constant":
        return _velocity(grid, zero), DirectorPairField.constant(grid)
    if recipe == "circle-wave":
        return _velocity(grid, zero), circle_wave(grid, p["wave_a"], p["wave_profile"])
    if recipe == "concentrated-bump":
        return _velocity(grid, zero), concentrated_bump(grid, p["bump_width"])
    if recipe == "taylor-green":
        x, y = grid.coords()[:2]
        a = 2 * np.pi / grid.lengths[0]
        b = 2 * np.pi / grid.lengths[1]
        scale = 1.0 / np.sqrt(a * b)
        u = np.stack([b * np.sin(a * x) * np.cos(b * y), -a * np.cos(a * x) * np.sin(b * y)]) * scale
        return _velocity(grid, u if grid.ndim == 2 else zero), DirectorPairField.constant(grid)
    if recipe == "vortex-pair":
        if grid.ndim != 2:
            raise ValidationError("vortex-pair needs a 2-D grid", "recipe")
        L = grid.lengths
        s = min(L) / 12.0
        psi = np.zeros(grid.shape)
        for sign, cx in ((1.0, L[0] / 2 - L[0] / 6), (-1.0, L[0] / 2 + L[0] / 6)):
            dx, dy = _offsets(grid, (cx, L[1] / 2))
            psi += sign * np.exp(-(dx * dx + dy * dy) / (2 * s * s))
        return _velocity(grid, p["vortex_strength"] * s * _from_stream(grid, psi)), DirectorPairField.constant(grid)

    # random-smooth
    omega = _modes(grid, rng, p["smooth_amplitude"], 3)
    n, m = frame_from_rotations(rotation_matrices(omega))
    directors = DirectorPairField(grid, n, m).retracted()
    if grid.ndim != 2:
        return None, directors
    psi = _modes(grid, rng, 1.0, 1)[0]
    u = _from_stream(grid, psi)
    umax = np.sqrt((u * u).sum(0)).max()
    if umax > 0:
        u = u * (p["smooth_amplitude"] / umax)
    return _velocity(grid, u), directors

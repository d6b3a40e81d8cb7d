"""Grids, director-pair fields, finite-difference stencils and the retraction onto N.

Array conventions
-----------------
Node arrays are indexed ``[i_x, i_y(, i_z)]`` with ``x_alpha = i_alpha * h_alpha``.
Vector-valued fields carry their component axis first, e.g. ``n.shape == (3, nx, ny, nz)``.
A Jacobian ``J`` of a component field has shape ``(c, ndim, *nodes)`` with
``J[i, a] = d f^i / d x_a``.

Periodic axes hold ``N`` nodes; dirichlet axes hold ``N + 1`` nodes including both
boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstraintViolated, DegenerateInput, ValidationError

PERIODIC = "periodic"
DIRICHLET = "dirichlet"

# retraction degeneracy thresholds (implementation constants)
MIN_NORM = 0.5
MIN_REMAINDER = 0.1


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid in 2 or 3 dimensions."""

    dims: tuple
    spacing: tuple
    boundary: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        boundary = self.boundary
        if isinstance(boundary, str):
            boundary = (boundary,) * len(dims)
        boundary = tuple(boundary)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "boundary", boundary)
        if len(dims) not in (2, 3):
            raise ValidationError(f"ndim must be 2 or 3, got {len(dims)}", "ndim")
        if len(spacing) != len(dims) or len(boundary) != len(dims):
            raise ValidationError("dims, spacing and boundary must have equal length", "dims")
        if any(d < 4 for d in dims):
            raise ValidationError(f"all dims must be >= 4, got {dims}", "dims")
        if any(not (h > 0.0) or not np.isfinite(h) for h in spacing):
            raise ValidationError(f"all spacings must be > 0, got {spacing}", "spacing")
        for b in boundary:
            if b not in (PERIODIC, DIRICHLET):
                raise ValidationError(f"unknown boundary kind {b!r}", "boundary")

    @classmethod
    def uniform(cls, ndim, cells, length, boundary=DIRICHLET):
        """Cube/square of side ``length`` with ``cells`` cells per axis."""
        return cls((cells,) * ndim, (length / cells,) * ndim, boundary)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple:
        """Node counts per axis."""
        return tuple(d if b == PERIODIC else d + 1 for d, b in zip(self.dims, self.boundary))

    @property
    def lengths(self) -> tuple:
        return tuple(d * h for d, h in zip(self.dims, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def periodic(self, axis) -> bool:
        return self.boundary[axis] == PERIODIC

    def coords(self):
        """Node coordinates as a list of broadcastable 'ij' meshgrid arrays."""
        axes = [np.arange(s) * h for s, h in zip(self.shape, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def weights(self):
        """Trapezoid quadrature weights per node (cell volume, halved on dirichlet faces)."""
        w = np.ones(self.shape)
        for a in range(self.ndim):
            w1 = np.full(self.shape[a], self.spacing[a])
            if not self.periodic(a):
                w1[0] *= 0.5
                w1[-1] *= 0.5
            shape = [1] * self.ndim
            shape[a] = -1
            w = w * w1.reshape(shape)
        return w

    def interior_mask(self):
        """True at nodes not lying on a dirichlet face."""
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.ndim):
            if not self.periodic(a):
                idx = [slice(None)] * self.ndim
                idx[a] = 0
                mask[tuple(idx)] = False
                idx[a] = -1
                mask[tuple(idx)] = False
        return mask


@dataclass
class DirectorPairField:
    """Orthonormal director pair (n, m) sampled on the nodes of ``grid``.

    On dirichlet faces the stored values are the prescribed boundary data.
    """

    grid: GridSpec
    n: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        expected = (3,) + self.grid.shape
        if self.n.shape != expected or self.m.shape != expected:
            raise ValidationError(
                f"director arrays must have shape {expected}, got {self.n.shape}, {self.m.shape}",
                "directors",
            )

    def copy(self) -> "DirectorPairField":
        return DirectorPairField(self.grid, self.n.copy(), self.m.copy())

    def retracted(self) -> "DirectorPairField":
        n, m = retract(self.n, self.m)
        return DirectorPairField(self.grid, n, m)

    @classmethod
    def constant(cls, grid, n=(0.0, 0.0, 1.0), m=(1.0, 0.0, 0.0)):
        shape = (3,) + (1,) * grid.ndim
        ones = np.ones((1,) + grid.shape)
        return cls(grid, np.asarray(n, float).reshape(shape) * ones,
                   np.asarray(m, float).reshape(shape) * ones)


@dataclass
class VectorField2D:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 2 or self.values.shape != (2,) + self.grid.shape:
            raise ValidationError("VectorField2D needs a 2-D grid and values of shape (2, nx, ny)",
                                  "values")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((2,) + grid.shape))


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValidationError("ScalarField values must match the grid shape", "values")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("ScalarField entries must be finite", "values")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))


# ---------------------------------------------------------------------------
# constraint manifold


def _dot(a, b):
    return np.einsum("i...,i...->...", a, b)


def retract(n_raw, m_raw):
    """Map a raw pair back onto N: normalize n, Gram-Schmidt m against n, normalize m.

    Works pointwise on single 3-vectors or on arrays with the component axis first.
    Raises DegenerateInput when ``|n_raw| < 0.5`` or the Gram-Schmidt remainder of
    ``m_raw`` has norm below 0.1 anywhere.
    """
    n_raw = np.asarray(n_raw, dtype=float)
    m_raw = np.asarray(m_raw, dtype=float)
    nn = np.sqrt(_dot(n_raw, n_raw))
    if np.any(~(nn >= MIN_NORM)):
        raise DegenerateInput(f"|n| = {np.nanmin(nn):.3g} below {MIN_NORM}")
    n = n_raw / nn
    rem = m_raw - _dot(m_raw, n) * n
    rn = np.sqrt(_dot(rem, rem))
    if np.any(~(rn >= MIN_REMAINDER)):
        raise DegenerateInput(f"Gram-Schmidt remainder {np.nanmin(rn):.3g} below {MIN_REMAINDER}")
    return n, rem / rn


def constraint_residuals(field: DirectorPairField):
    """Maxima over nodes of ``| |n|-1 |``, ``| |m|-1 |`` and ``|n.m|``."""
    n, m = field.n, field.m
    en = np.abs(np.sqrt(_dot(n, n)) - 1.0).max()
    em = np.abs(np.sqrt(_dot(m, m)) - 1.0).max()
    ed = np.abs(_dot(n, m)).max()
    return float(en), float(em), float(ed)


def tangent_project(n, m, fn, fm, tol=1e-8):
    """Split a force pair into its tangent part on N and the multipliers.

    Returns ``(fn_tan, fm_tan, lam1, lam2, mu)`` with
    ``fn = fn_tan + lam1 n + mu m`` and ``fm = fm_tan + lam2 m + mu n``.
    """
    n = np.asarray(n, float)
    m = np.asarray(m, float)
    fn = np.asarray(fn, float)
    fm = np.asarray(fm, float)
    off = max(np.abs(_dot(n, n) - 1).max(), np.abs(_dot(m, m) - 1).max(), np.abs(_dot(n, m)).max())
    if off > tol:
        raise ConstraintViolated(f"pair is {off:.3g} off the constraint manifold")
    lam1 = _dot(fn, n)
    lam2 = _dot(fm, m)
    mu = 0.5 * (_dot(fn, m) + _dot(fm, n))
    fn_tan = fn - lam1 * n - mu * m
    fm_tan = fm - lam2 * m - mu * n
    return fn_tan, fm_tan, lam1, lam2, mu


# ---------------------------------------------------------------------------
# stencils


def _diff_axis(f, axis, h, periodic):
    """Second-order first derivative of ``f`` along ``axis`` (array axis index)."""
    if periodic:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return np.moveaxis(d, 0, axis)


def _second_axis(f, axis, h, periodic):
    if periodic:
        return (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / (h * h)
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
    d[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    return np.moveaxis(d, 0, axis)


def gradient(f, grid: GridSpec):
    """Jacobian of a scalar ``(*nodes)`` or component ``(c, *nodes)`` field.

    Central differences in the interior and on periodic axes, one-sided second-order
    stencils on dirichlet faces. Output shape ``(ndim, *nodes)`` or ``(c, ndim, *nodes)``.
    """
    f = np.asarray(f, dtype=float)
    lead = f.ndim - grid.ndim
    parts = [
        _diff_axis(f, lead + a, grid.spacing[a], grid.periodic(a)) for a in range(grid.ndim)
    ]
    return np.stack(parts, axis=lead)


def laplacian(f, grid: GridSpec):
    """5-point (2-D) / 7-point (3-D) Laplacian; exact on quadratics at every node."""
    f = np.asarray(f, dtype=float)
    lead = f.ndim - grid.ndim
    out = np.zeros_like(f)
    for a in range(grid.ndim):
        out += _second_axis(f, lead + a, grid.spacing[a], grid.periodic(a))
    return out


def pad_jacobian(jac):
    """Zero-pad a ``(3, 2, ...)`` Jacobian of a z-independent field to ``(3, 3, ...)``."""
    jac = np.asarray(jac, dtype=float)
    if jac.shape[1] == 3:
        return jac
    pad = np.zeros((jac.shape[0], 3 - jac.shape[1]) + jac.shape[2:])
    return np.concatenate([jac, pad], axis=1)


def curl_of(jac):
    """Curl of a field with 3x3 Jacobian ``jac[i, a] = d_a f^i``."""
    return np.stack([
        jac[2, 1] - jac[1, 2],
        jac[0, 2] - jac[2, 0],
        jac[1, 0] - jac[0, 1],
    ])


def divergence_curl(jac):
    """Divergence and curl of a vector field from its Jacobian.

    ``curl_3 = d_1 f^2 - d_2 f^1`` (cyclically); a 2-column Jacobian is treated as
    z-independent.
    """
    jac = pad_jacobian(jac)
    div = jac[0, 0] + jac[1, 1] + jac[2, 2]
    return div, curl_of(jac)


def ball_offsets(grid: GridSpec, r):
    """Integer node offsets inside the closed ball of radius ``r``."""
    ranges = [np.arange(-int(r // h), int(r // h) + 1) for h in grid.spacing]
    mesh = np.meshgrid(*ranges, indexing="ij")
    dist2 = sum((o * h) ** 2 for o, h in zip(mesh, grid.spacing))
    inside = dist2 <= r * r * (1 + 1e-12)
    return np.stack([o[inside] for o in mesh], axis=1)


def ball_sums(values, grid: GridSpec, r):
    """Sum of ``values`` over the node-in-ball mask around every node.

    Periodic axes wrap; nodes outside a dirichlet box contribute nothing.
    """
    offs = ball_offsets(grid, r)
    pad = [int(r // h) for h in grid.spacing]
    modes = ["wrap" if grid.periodic(a) else "constant" for a in range(grid.ndim)]
    padded = values
    for a in range(grid.ndim):
        width = [(0, 0)] * grid.ndim
        width[a] = (pad[a], pad[a])
        padded = np.pad(padded, width, mode=modes[a])
    out = np.zeros(grid.shape)
    for off in offs:
        sl = tuple(slice(p + o, p + o + s) for p, o, s in zip(pad, off, grid.shape))
        out += padded[sl]
    return out


def rotate(field: DirectorPairField, rot: Sequence[Sequence[float]]) -> DirectorPairField:
    """Apply a fixed matrix to both directors at every node."""
    rot = np.asarray(rot, dtype=float)
    return DirectorPairField(field.grid, np.einsum("ij,j...->i...", rot, field.n),
                             np.einsum("ij,j...->i...", rot, field.m))


def rotation_matrices(omega):
    """Rodrigues formula: rotation matrices ``(3, 3, ...)`` for rotation vectors ``(3, ...)``."""
    omega = np.asarray(omega, dtype=float)
    theta = np.sqrt(_dot(omega, omega))
    # sin(t)/t and (1-cos t)/t^2 with their small-angle limits
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    kx, ky, kz = omega
    zero = np.zeros_like(kx)
    k = np.array([[zero, -kz, ky], [kz, zero, -kx], [-ky, kx, zero]])
    k2 = np.einsum("ij...,jk...->ik...", k, k)
    eye = np.eye(3).reshape((3, 3) + (1,) * omega[0].ndim)
    return eye + a * k + b * k2


def frame_from_rotations(rot):
    """Director pair (R e3, R e1) from rotation matrices ``(3, 3, ...)``."""
    return np.array(rot[:, 2]), np.array(rot[:, 0])

"""Biaxial Oseen-Frank energies, their exact discrete gradients and the blow-up form.

Pointwise data: directors ``n, m`` of shape ``(3, ...)`` and Jacobians ``Dn, Dm`` of
shape ``(3, 3, ...)`` (or ``(3, 2, ...)`` for z-independent fields) with
``Dn[i, a] = d_a n^i``.

The discrete energy lives on grid cells: each cell carries a cell-centred Jacobian
(average of the edge differences along each axis) and is integrated with one
evaluation per cell corner, using the director values stored at that corner, each
weighted by ``volume / 2**ndim``. The directors entering the density are therefore
exactly on N, which keeps the one-constant identity ``W~ = |Dn|^2/2 + |Dm|^2/2``
exact for the discrete energy as well.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolated, ValidationError
from .fields import GridSpec, DirectorPairField, curl_of, pad_jacobian

TERM_NAMES = (
    "splay_n", "twist_n", "bend_n",
    "splay_m", "twist_m", "bend_m",
    "k7", "k8", "k9", "k10", "k11", "k12",
)


@dataclass(frozen=True)
class FrankConstants:
    """Twelve Frank constants ``k[0] .. k[11]`` (k1..k12)."""

    k: tuple

    def __post_init__(self):
        k = tuple(float(x) for x in self.k)
        if len(k) != 12:
            raise ValidationError(f"need 12 Frank constants, got {len(k)}", "k")
        object.__setattr__(self, "k", k)
        for i, v in enumerate(k):
            if not np.isfinite(v):
                raise ValidationError(f"k{i + 1} must be finite", f"k{i + 1}")
            if i < 6 and not v > 0.0:
                raise ValidationError(f"k{i + 1} must be > 0, got {v}", f"k{i + 1}")
            if i >= 6 and v < 0.0:
                raise ValidationError(f"k{i + 1} must be >= 0, got {v}", f"k{i + 1}")

    @classmethod
    def one_constant(cls, scale=1.0):
        return cls((scale,) * 6 + (0.0,) * 6)

    @property
    def alpha1(self) -> float:
        return min(self.k[0:3])

    @property
    def alpha2(self) -> float:
        return min(self.k[3:6])

    @property
    def alpha3(self) -> float:
        return min(self.alpha1, self.alpha2)

    def scaled(self, c) -> "FrankConstants":
        return FrankConstants(tuple(c * x for x in self.k))

    def __getitem__(self, i):
        """1-based access: ``k[1]`` is k1."""
        return self.k[i - 1]


@dataclass
class EnergyBreakdown:
    """Integrated energy pieces.

    ``null_n = 1/2 int (tr(Dn^2) - (div n)^2)`` so that
    ``modified = frank + alpha1 * null_n + alpha2 * null_m``.
    """

    terms: dict
    null_n: float
    null_m: float
    frank: float
    modified: float
    dirichlet_n: float
    dirichlet_m: float

    @property
    def dirichlet(self) -> float:
        return self.dirichlet_n + self.dirichlet_m


# ---------------------------------------------------------------------------
# pointwise kernel


def _cross(a, b):
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _dot(a, b):
    return (a * b).sum(axis=0)


def _curl_adjoint(c):
    g = np.zeros((3, 3) + c.shape[1:])
    g[2, 1] += c[0]
    g[1, 2] -= c[0]
    g[0, 2] += c[1]
    g[2, 0] -= c[1]
    g[1, 0] += c[2]
    g[0, 1] -= c[2]
    return g


def _trace(jac):
    return jac[0, 0] + jac[1, 1] + jac[2, 2]


def _forward(n, m, J, K, k):
    """Intermediate quantities shared by the energy terms and their adjoints.

    Quantities feeding only zero-coefficient terms are skipped.
    """
    c = {"n": n, "m": m, "J": J, "K": K}
    c["dn"] = _trace(J)
    c["dm"] = _trace(K)
    c["cn"] = curl_of(J)
    c["cm"] = curl_of(K)
    c["trJ2"] = np.einsum("ia...,ai...->...", J, J)
    c["trK2"] = np.einsum("ia...,ai...->...", K, K)
    if k[1] or k[2] or k[7]:
        c["s2"] = _dot(n, c["cn"])
        c["v3"] = _cross(n, c["cn"])
        c["s8"] = _dot(m, c["v3"])
    if k[4] or k[5] or k[6]:
        c["s5"] = _dot(m, c["cm"])
        c["v6"] = _cross(m, c["cm"])
        c["s7"] = _dot(n, c["v6"])
    if any(k[8:12]):
        # Jacobian of w = n x m
        Jw = np.stack([_cross(J[:, a], m) + _cross(n, K[:, a]) for a in range(3)], axis=1)
        c["Jw"] = Jw
        c["cw"] = curl_of(Jw)
        c["dw"] = _trace(Jw)
        c["s9"] = _dot(m, c["cw"])
        c["s10"] = _dot(n, c["cw"])
    return c


def _terms(c, k):
    """The twelve half-weighted terms of W, each an array over points."""
    def sq(i, key, vector=False):
        if not k[i]:
            return np.zeros(())
        v = c[key]
        return 0.5 * k[i] * (_dot(v, v) if vector else v * v)

    return np.stack(np.broadcast_arrays(
        sq(0, "dn"), sq(1, "s2"), sq(2, "v3", True),
        sq(3, "dm"), sq(4, "s5"), sq(5, "v6", True),
        sq(6, "s7"), sq(7, "s8"), sq(8, "s9"), sq(9, "s10"),
        sq(10, "cw", True), sq(11, "dw"),
    ))


def _null_terms(c):
    return 0.5 * (c["trJ2"] - c["dn"] ** 2), 0.5 * (c["trK2"] - c["dm"] ** 2)


def _backward(c, k, alpha1, alpha2):
    """Partial derivatives of W~ with respect to n, m, Dn, Dm."""
    n, m, J, K = c["n"], c["m"], c["J"], c["K"]
    cn, cm = c["cn"], c["cm"]
    eye = np.eye(3).reshape((3, 3) + (1,) * (n.ndim - 1))
    gn = gm = gcn = gcm = 0.0

    if k[1]:
        gn = gn + k[1] * c["s2"] * cn
        gcn = gcn + k[1] * c["s2"] * n
    if k[2]:
        gn = gn + k[2] * _cross(cn, c["v3"])
        gcn = gcn + k[2] * _cross(c["v3"], n)
    if k[4]:
        gm = gm + k[4] * c["s5"] * cm
        gcm = gcm + k[4] * c["s5"] * m
    if k[5]:
        gm = gm + k[5] * _cross(cm, c["v6"])
        gcm = gcm + k[5] * _cross(c["v6"], m)
    if k[6]:
        # s7 = n . (m x curl m)
        s7 = k[6] * c["s7"]
        gn = gn + s7 * c["v6"]
        gm = gm + s7 * _cross(cm, n)
        gcm = gcm + s7 * _cross(n, m)
    if k[7]:
        # s8 = m . (n x curl n)
        s8 = k[7] * c["s8"]
        gm = gm + s8 * c["v3"]
        gn = gn + s8 * _cross(cn, m)
        gcn = gcn + s8 * _cross(m, n)

    gJ = (k[0] - alpha1) * c["dn"] * eye + alpha1 * np.swapaxes(J, 0, 1)
    gK = (k[3] - alpha2) * c["dm"] * eye + alpha2 * np.swapaxes(K, 0, 1)
    if not np.isscalar(gcn):
        gJ = gJ + _curl_adjoint(gcn)
    if not np.isscalar(gcm):
        gK = gK + _curl_adjoint(gcm)

    if any(k[8:12]):
        cw = c["cw"]
        s9, s10 = k[8] * c["s9"], k[9] * c["s10"]
        gm = gm + s9 * cw
        gn = gn + s10 * cw
        gcw = s9 * m + s10 * n + k[10] * cw
        gJw = _curl_adjoint(gcw) + (k[11] * c["dw"]) * eye
        gJ = gJ + np.stack([_cross(m, gJw[:, a]) for a in range(3)], axis=1)
        gK = gK + np.stack([_cross(gJw[:, a], n) for a in range(3)], axis=1)
        gm = gm + sum(_cross(gJw[:, a], J[:, a]) for a in range(3))
        gn = gn + sum(_cross(K[:, a], gJw[:, a]) for a in range(3))
    gn = np.broadcast_to(gn, n.shape)
    gm = np.broadcast_to(gm, m.shape)
    return gn, gm, gJ, gK


def _check_on_manifold(n, m, tol=1e-8):
    off = max(np.abs(_dot(n, n) - 1).max(), np.abs(_dot(m, m) - 1).max(), np.abs(_dot(n, m)).max())
    if off > tol:
        raise ConstraintViolated(f"pair is {off:.3g} off the constraint manifold")


def _pointwise_inputs(n, m, dn, dm):
    n = np.asarray(n, float)
    m = np.asarray(m, float)
    _check_on_manifold(n, m)
    return n, m, pad_jacobian(dn), pad_jacobian(dm)


def frank_terms(n, m, dn, dm, k: FrankConstants):
    """The twelve terms of W stacked along axis 0."""
    n, m, J, K = _pointwise_inputs(n, m, dn, dm)
    return _terms(_forward(n, m, J, K, k.k), k.k)


def frank_density(n, m, dn, dm, k: FrankConstants):
    """Biaxial Oseen-Frank density W at each point."""
    return frank_terms(n, m, dn, dm, k).sum(axis=0)


def modified_density(n, m, dn, dm, k: FrankConstants):
    """W plus the null-Lagrangian terms ``alpha/2 (tr(D^2) - (div)^2)`` for n and m."""
    n, m, J, K = _pointwise_inputs(n, m, dn, dm)
    c = _forward(n, m, J, K, k.k)
    nl_n, nl_m = _null_terms(c)
    return _terms(c, k.k).sum(axis=0) + k.alpha1 * nl_n + k.alpha2 * nl_m


def modified_density_grad(n, m, dn, dm, k: FrankConstants):
    """Partial derivatives ``(dW~/dn, dW~/dm, dW~/dDn, dW~/dDm)`` at each point."""
    n, m, J, K = _pointwise_inputs(n, m, dn, dm)
    return _backward(_forward(n, m, J, K, k.k), k.k, k.alpha1, k.alpha2)


# ---------------------------------------------------------------------------
# cell discretization


def _corners(ndim):
    return list(itertools.product((0, 1), repeat=ndim))


def _take(f, grid, corner):
    """Values of node array ``f`` (spatial axes trailing) at one corner of every cell."""
    lead = f.ndim - grid.ndim
    for a, c in enumerate(corner):
        ax = lead + a
        if grid.periodic(a):
            if c:
                f = np.roll(f, -1, axis=ax)
        else:
            sl = [slice(None)] * f.ndim
            sl[ax] = slice(1, None) if c else slice(0, -1)
            f = f[tuple(sl)]
    return f


def _take_adjoint(g, grid, corner):
    """Scatter cell-corner values back onto the nodes (transpose of ``_take``)."""
    lead = g.ndim - grid.ndim
    for a, c in enumerate(corner):
        ax = lead + a
        if grid.periodic(a):
            if c:
                g = np.roll(g, 1, axis=ax)
        else:
            pad = [(0, 0)] * g.ndim
            pad[ax] = (1, 0) if c else (0, 1)
            g = np.pad(g, pad)
    return g


def cell_jacobian(f, grid: GridSpec):
    """Cell-centred Jacobian ``(c, 3, *cells)`` of a component field ``(c, *nodes)``.

    Axes beyond ``grid.ndim`` get zero derivatives.
    """
    corners = _corners(grid.ndim)
    scale = 1.0 / 2 ** (grid.ndim - 1)
    vals = [_take(f, grid, c) for c in corners]
    parts = []
    for a in range(3):
        if a >= grid.ndim:
            parts.append(np.zeros_like(vals[0]))
            continue
        acc = np.zeros_like(vals[0])
        for c, v in zip(corners, vals):
            acc = acc + v if c[a] else acc - v
        parts.append(acc * (scale / grid.spacing[a]))
    return np.stack(parts, axis=1)


def _cell_jacobian_adjoint(g, grid: GridSpec):
    """Transpose of ``cell_jacobian``: ``(c, 3, *cells)`` -> ``(c, *nodes)``."""
    corners = _corners(grid.ndim)
    scale = 1.0 / 2 ** (grid.ndim - 1)
    out = 0.0
    for c in corners:
        acc = 0.0
        for a in range(grid.ndim):
            sign = 1.0 if c[a] else -1.0
            acc = acc + sign * (scale / grid.spacing[a]) * g[:, a]
        out = out + _take_adjoint(acc, grid, c)
    return out


def _corner_stack(f, grid):
    return np.stack([_take(f, grid, c) for c in _corners(grid.ndim)], axis=1)


def _cell_inputs(field: DirectorPairField):
    grid = field.grid
    J = cell_jacobian(field.n, grid)[:, :, None]
    K = cell_jacobian(field.m, grid)[:, :, None]
    n = _corner_stack(field.n, grid)
    m = _corner_stack(field.m, grid)
    return n, m, J, K


def total_energy(field: DirectorPairField, k: FrankConstants) -> EnergyBreakdown:
    """Integrate every piece of W~ over the grid.

    No constraint check is made, so the same routine serves finite-difference probes
    that leave N.
    """
    grid = field.grid
    w = grid.cell_volume / 2 ** grid.ndim
    n, m, J, K = _cell_inputs(field)
    c = _forward(n, m, J, K, k.k)
    terms = _terms(c, k.k)
    term_totals = [float(w * t.sum()) for t in terms]
    # Jacobian-only quantities are identical at all corners of a cell
    corners = 2 ** grid.ndim
    nl_n, nl_m = _null_terms(c)
    nl_n = float(w * corners * nl_n.sum())
    nl_m = float(w * corners * nl_m.sum())
    Jc, Kc = J[:, :, 0], K[:, :, 0]
    dir_n = float(0.5 * grid.cell_volume * (Jc * Jc).sum())
    dir_m = float(0.5 * grid.cell_volume * (Kc * Kc).sum())
    frank = float(sum(term_totals))
    return EnergyBreakdown(
        terms=dict(zip(TERM_NAMES, term_totals)),
        null_n=nl_n,
        null_m=nl_m,
        frank=frank,
        modified=frank + k.alpha1 * nl_n + k.alpha2 * nl_m,
        dirichlet_n=dir_n,
        dirichlet_m=dir_m,
    )


def modified_total(field: DirectorPairField, k: FrankConstants) -> float:
    return total_energy(field, k).modified


def variational_gradient(field: DirectorPairField, k: FrankConstants):
    """Exact gradient ``(Fn, Fm)`` of the discrete modified energy w.r.t. node values.

    Entries on dirichlet faces are zero (those nodes are fixed). Divide by
    ``grid.weights()`` to get the L2 (per unit volume) gradient.
    """
    grid = field.grid
    w = grid.cell_volume / 2 ** grid.ndim
    n, m, J, K = _cell_inputs(field)
    gn, gm, gJ, gK = _backward(_forward(n, m, J, K, k.k), k.k, k.alpha1, k.alpha2)
    corners = _corners(grid.ndim)
    shape = gJ.shape[:2] + n.shape[1:]
    fn = _cell_jacobian_adjoint(w * np.broadcast_to(gJ, shape).sum(axis=2), grid)
    fm = _cell_jacobian_adjoint(w * np.broadcast_to(gK, shape).sum(axis=2), grid)
    gn = np.broadcast_to(gn, n.shape)
    gm = np.broadcast_to(gm, n.shape)
    for i, c in enumerate(corners):
        fn = fn + _take_adjoint(w * gn[:, i], grid, c)
        fm = fm + _take_adjoint(w * gm[:, i], grid, c)
    mask = grid.interior_mask()
    return fn * mask, fm * mask


# ---------------------------------------------------------------------------
# blow-up quadratic form


@dataclass
class QuadraticForm:
    """``e(xi) = sum A[i, j, a, b] xi[i, a] xi[j, b]`` for ``xi`` in R^{3x3}.

    ``xi[i, a]`` is the derivative along axis ``a`` of the tangent coordinate ``U^i``,
    ``U = (u^1, u^2, v^1)``.
    """

    A: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def energy(self, xi):
        xi = np.asarray(xi, float)
        return np.einsum("ijab,...ia,...jb->...", self.A, xi, xi)

    def matrix(self):
        """Symmetrized 9x9 matrix acting on ``xi`` flattened as ``(i, a)``."""
        M = np.transpose(self.A, (0, 2, 1, 3)).reshape(9, 9)
        return 0.5 * (M + M.T)

    def symmetrized(self) -> "QuadraticForm":
        M = self.matrix().reshape(3, 3, 3, 3)
        return QuadraticForm(np.transpose(M, (0, 2, 1, 3)).copy(), self.p, self.q)


def tangent_gradients(xi, p, q):
    """Gradients of ``(u, v)`` in ``T_(p,q) N`` from the coordinate gradient ``xi``.

    With ``r = p x q``: ``u = u1 q + u2 r`` and ``v = v1 r - u1 p``.
    """
    xi = np.asarray(xi, float)
    r = np.cross(p, q)
    du = np.einsum("i,...a->...ia", q, xi[..., 0, :]) + np.einsum("i,...a->...ia", r, xi[..., 1, :])
    dv = np.einsum("i,...a->...ia", r, xi[..., 2, :]) - np.einsum("i,...a->...ia", p, xi[..., 0, :])
    return du, dv


def blowup_form(k: FrankConstants, p=(0.0, 0.0, 1.0), q=(1.0, 0.0, 0.0)) -> QuadraticForm:
    """Assemble the blow-up energy at base point ``(p, q)`` term by term.

    Each squared term ``k/2 (l . xi)^2`` adds ``k/2 l l^T``; the two null-Lagrangian
    terms add ``alpha/2 (tr(X_a X_b) - tr X_a tr X_b)`` over the coordinate basis.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if abs(p @ p - 1) > 1e-12 or abs(q @ q - 1) > 1e-12 or abs(p @ q) > 1e-12:
        raise ConstraintViolated("base point (p, q) must lie on N")
    basis = np.eye(9).reshape(9, 3, 3)
    du, dv = tangent_gradients(basis, p, q)          # (9, 3, 3)
    du = np.moveaxis(du, 0, -1)                      # (3, 3, 9): [i, a, basis]
    dv = np.moveaxis(dv, 0, -1)
    P = p[:, None]
    Q = q[:, None]
    cu, cv = curl_of(du), curl_of(dv)
    w_jac = np.stack([np.cross(P, dv[:, a], axis=0) + np.cross(du[:, a], Q, axis=0)
                      for a in range(3)], axis=1)
    cw = curl_of(w_jac)
    kk = k.k
    linear = [
        (kk[0], _trace(du)),
        (kk[1], P.T @ cu),
        (kk[2], np.cross(P, cu, axis=0)),
        (kk[3], _trace(dv)),
        (kk[4], Q.T @ cv),
        (kk[5], np.cross(Q, cv, axis=0)),
        (kk[6], P.T @ np.cross(Q, cv, axis=0)),
        (kk[7], Q.T @ np.cross(P, cu, axis=0)),
        (kk[8], Q.T @ cw),
        (kk[9], P.T @ cw),
        (kk[10], cw),
        (kk[11], _trace(w_jac)),
    ]
    M = np.zeros((9, 9))
    for coef, lin in linear:
        lin = np.atleast_2d(lin)
        M += 0.5 * coef * lin.T @ lin
    for alpha, X in ((k.alpha1, du), (k.alpha2, dv)):
        tr = _trace(X)
        trXY = np.einsum("iaI,aiJ->IJ", X, X)
        M += 0.5 * alpha * (trXY - np.outer(tr, tr))
    A = np.transpose(M.reshape(3, 3, 3, 3), (0, 2, 1, 3))
    return QuadraticForm(A, p, q)


def ellipticity_margin(form: QuadraticForm, k: FrankConstants, tol=1e-10):
    """Smallest eigenvalue of the symmetrized form and whether it clears ``alpha3 / 2``."""
    lam_min = float(np.linalg.eigvalsh(form.matrix()).min())
    return lam_min, lam_min >= 0.5 * k.alpha3 - tol

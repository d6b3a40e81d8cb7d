"""Projected gradient flow for the modified energy on 3-D dirichlet grids."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .energy import FrankConstants, modified_total, variational_gradient
from .errors import NotConverged, StepRejectedRepeatedly, ValidationError
from .fields import (
    DirectorPairField,
    GridSpec,
    ball_sums,
    gradient,
    laplacian,
    retract,
    tangent_project,
)

log = logging.getLogger(__name__)

MAX_HALVINGS = 30
# relative slack for the descent test; energy changes below it are rounding noise
DESCENT_SLACK = 1e-13


@dataclass
class MinimizeConfig:
    grid: GridSpec
    k: FrankConstants
    tau: float | None = None
    max_iter: int = 5000
    tol: float = 1e-6
    eps0_sq: float = 0.05
    theta0: float = 0.25
    radii: tuple = ()

    def __post_init__(self):
        g = self.grid
        if g.ndim != 3 or any(g.periodic(a) for a in range(3)):
            raise ValidationError("minimization needs a 3-D dirichlet grid", "grid")
        if self.tau is None:
            self.tau = stable_step(g, self.k)
        if not self.tau > 0:
            raise ValidationError("tau must be > 0", "tau")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0", "tol")
        half = 0.5 * min(g.lengths)
        for r in self.radii:
            if not 0 < r <= half:
                raise ValidationError(f"scan radius {r} outside (0, {half}]", "radii")


@dataclass
class ScanHit:
    center: tuple
    radius: float
    value: float


@dataclass
class MinimizeResult:
    field: DirectorPairField
    energy_trace: list
    grad_norm: float
    lambda1: np.ndarray
    lambda2: np.ndarray
    mu: np.ndarray
    candidates: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def stable_step(grid: GridSpec, k: FrankConstants) -> float:
    return min(grid.spacing) ** 2 / (12.0 * max(k.k))


def l2_gradient(field: DirectorPairField, k: FrankConstants):
    """Variational gradient per unit volume (raw gradient divided by node weights)."""
    fn, fm = variational_gradient(field, k)
    w = field.grid.weights()
    return fn / w, fm / w


def el_residual(field: DirectorPairField, k: FrankConstants):
    """Tangent part of the L2 gradient, the multipliers and the grid L2 norm.

    Returns ``(residual_n, residual_m, lam1, lam2, mu, norm)``; all are zero on
    dirichlet faces.
    """
    gn, gm = l2_gradient(field, k)
    rn, rm, lam1, lam2, mu = tangent_project(field.n, field.m, gn, gm)
    mask = field.grid.interior_mask()
    rn, rm = rn * mask, rm * mask
    w = field.grid.weights()
    norm = float(np.sqrt((w * ((rn * rn).sum(0) + (rm * rm).sum(0))).sum()))
    return rn, rm, lam1 * mask, lam2 * mask, mu * mask, norm


def _descend(field, k, tau, energy=None, residual=None):
    if energy is None:
        energy = modified_total(field, k)
    if residual is None:
        residual = el_residual(field, k)
    rn, rm = residual[0], residual[1]
    for _ in range(MAX_HALVINGS + 1):
        n, m = retract(field.n - tau * rn, field.m - tau * rm)
        trial = DirectorPairField(field.grid, n, m)
        e_new = modified_total(trial, k)
        if e_new <= energy + DESCENT_SLACK * abs(energy):
            return trial, tau, e_new
        tau *= 0.5
    raise StepRejectedRepeatedly(f"no descent after {MAX_HALVINGS} halvings")


def flow_step(field: DirectorPairField, k: FrankConstants, tau: float):
    """One projected gradient step with retraction and backtracking.

    Returns the new field and the step size actually accepted.
    """
    new, tau_used, _ = _descend(field, k, tau)
    return new, tau_used


def minimize(config: MinimizeConfig, initial: DirectorPairField, raise_on_failure=False):
    field = initial.copy()
    k = config.k
    energy = modified_total(field, k)
    trace = [energy]
    converged = False
    it = 0
    tau = config.tau
    while True:
        res = el_residual(field, k)
        norm = res[-1]
        if norm <= config.tol:
            converged = True
            break
        if it >= config.max_iter:
            break
        field, tau_used, energy = _descend(field, k, tau, energy, res)
        trace.append(energy)
        it += 1
        if it % 500 == 0:
            log.info("iter %d energy %.12g grad %.3e", it, energy, norm)
    _, _, lam1, lam2, mu, norm = el_residual(field, k)
    candidates = []
    if config.radii:
        candidates = flagged_centers(scaled_energy_scan(field, config.radii), config.eps0_sq)
    result = MinimizeResult(field, trace, norm, lam1, lam2, mu, candidates, converged, it)
    if not converged and raise_on_failure:
        raise NotConverged(f"gradient norm {norm:.3e} after {it} iterations", result)
    return result


def compare_runs(a: MinimizeResult, b: MinimizeResult, rtol=1e-4):
    """Return ``None`` when final energies agree, else the index (0 or 1) of the higher run."""
    ea, eb = a.energy_trace[-1], b.energy_trace[-1]
    if abs(ea - eb) <= rtol * max(abs(ea), abs(eb)):
        return None
    return 0 if ea > eb else 1


# ---------------------------------------------------------------------------
# scaled energy diagnostics


def gradient_energy_density(field: DirectorPairField):
    """``|grad n|^2 + |grad m|^2`` at the nodes."""
    dn = gradient(field.n, field.grid)
    dm = gradient(field.m, field.grid)
    return (dn * dn).sum(axis=(0, 1)) + (dm * dm).sum(axis=(0, 1))


def scaled_energy_scan(field: DirectorPairField, radii):
    """``r^-1 int_{B_r(x)} (|grad n|^2 + |grad m|^2)`` for each radius.

    Centers are the nodes whose largest ball stays inside the domain. Returns a dict
    radius -> array over nodes (NaN where the center is excluded).
    """
    grid = field.grid
    weighted = gradient_energy_density(field) * grid.weights()
    rmax = max(radii)
    valid = np.ones(grid.shape, dtype=bool)
    for a, x in enumerate(grid.coords()):
        if not grid.periodic(a):
            valid &= (x >= rmax - 1e-12) & (x <= grid.lengths[a] - rmax + 1e-12)
    out = {}
    for r in sorted(radii):
        vals = ball_sums(weighted, grid, r) / r
        out[r] = np.where(valid, vals, np.nan)
    return out


def flagged_centers(scan, eps0_sq):
    """Nodes whose scaled energy exceeds ``eps0_sq`` at every scanned radius."""
    radii = sorted(scan)
    flags = np.ones(next(iter(scan.values())).shape, dtype=bool)
    for r in radii:
        flags &= np.nan_to_num(scan[r], nan=-np.inf) > eps0_sq
    hits = []
    for idx in zip(*np.nonzero(flags)):
        idx = tuple(int(i) for i in idx)
        for r in radii:
            hits.append(ScanHit(idx, r, float(scan[r][idx])))
    return hits


def decay_ratios(scan, r_big, r_small):
    """Ratio of scaled energies at ``r_small`` and ``r_big`` over valid centers."""
    a, b = scan[r_big], scan[r_small]
    ok = np.isfinite(a) & (a > 0)
    return b[ok] / a[ok], a[ok]


# ---------------------------------------------------------------------------
# initialization


def harmonic_extension(grid: GridSpec, n_boundary, m_boundary):
    """Componentwise discrete-harmonic extension of the boundary values, then retraction.

    Only the values of ``n_boundary``/``m_boundary`` on dirichlet faces are used.
    """
    mask = grid.interior_mask()
    inner = [s - 2 for s in grid.shape]
    lap = None
    for a in range(grid.ndim):
        t = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(inner[a], inner[a])) / grid.spacing[a] ** 2
        term = sparse.identity(1)
        for b in range(grid.ndim):
            term = sparse.kron(term, t if b == a else sparse.identity(inner[b]))
        lap = term if lap is None else lap + term
    lap = lap.tocsc()

    def extend(f):
        out = np.array(f, dtype=float)
        for comp in range(out.shape[0]):
            rhs = -laplacian(np.where(mask, 0.0, out[comp]), grid)[mask]
            out[comp][mask] = spsolve(lap, rhs)
        return out

    n, m = retract(extend(n_boundary), extend(m_boundary))
    return DirectorPairField(grid, n, m)

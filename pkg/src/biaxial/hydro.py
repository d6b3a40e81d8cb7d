"""Explicit splitting scheme for the simplified biaxial Ericksen-Leslie system in 2-D.

Unknowns are node-based: velocity ``u`` (2 components), pressure ``P`` and the director
pair ``(n, m)``. One step is

    u*  = u + dt (-u.grad u + nu lap u - div sigma)
    u'  = u* - grad phi,   div u' = 0,   P' = phi / dt
    n'  = retract(n + dt T_n),   m' likewise

where ``T_n, T_m`` is the tangential part of ``(lap n - u'.grad n, lap m - u'.grad m)``.
On the constraint set that tangential part equals
``lap n + |grad n|^2 n + <grad n, grad m> m - u.grad n`` (and symmetrically for m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import CFLViolated, PoissonNotConverged, ValidationError, WindowTooShort
from .fields import (
    DirectorPairField,
    GridSpec,
    ScalarField,
    VectorField2D,
    ball_sums,
    constraint_residuals,
    gradient,
    laplacian,
    retract,
)

C0_DEFAULT = 8.0 * math.pi
PROJECTION_TOL = 1e-10
# relative slack on the CFL comparison so that dt == bound passes
CFL_SLACK = 1e-12


@dataclass
class FlowState:
    t: float
    u: VectorField2D
    P: ScalarField
    directors: DirectorPairField
    nu: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValidationError("viscosity must be > 0", "nu")
        if self.u.grid != self.directors.grid or self.P.grid != self.directors.grid:
            raise ValidationError("velocity, pressure and directors must share a grid", "grid")
        if self.grid.ndim != 2:
            raise ValidationError("flow states live on 2-D grids", "grid")

    @property
    def grid(self) -> GridSpec:
        return self.directors.grid

    def copy(self) -> "FlowState":
        return FlowState(
            self.t,
            VectorField2D(self.grid, self.u.values.copy()),
            ScalarField(self.grid, self.P.values.copy()),
            self.directors.copy(),
            self.nu,
        )

    @classmethod
    def at_rest(cls, directors: DirectorPairField, nu=1.0, t=0.0):
        g = directors.grid
        return cls(t, VectorField2D.zeros(g), ScalarField.zeros(g), directors, nu)


@dataclass
class EnergyBudget:
    """Energies of the new state and the dissipation rates over one step.

    ``residual`` is the full balance including viscous dissipation,
    ``2 dE/dt + 2 nu int|grad u|^2 + 2 int(|Dn|^2 + |Dm|^2)``.
    ``residual_printed`` omits the viscous term.
    """

    kinetic: float
    dirichlet_n: float
    dirichlet_m: float
    total: float
    prev_total: float
    visc_dissip: float
    dir_dissip: float
    residual: float
    residual_printed: float
    dt: float
    nu: float

    def nonincreasing(self, slack=0.0) -> bool:
        """Energy did not grow by more than the budget residual allows."""
        return self.total - self.prev_total <= 0.5 * self.dt * abs(self.residual) + slack


@dataclass
class ConcentrationReport:
    local: np.ndarray
    max_local: float
    radius: float
    threshold: float
    fired: bool
    centers: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# discrete operators


def _advect(u, f, grid):
    """``(u . grad) f`` for a component field ``f`` of shape ``(c, nx, ny)``."""
    return np.einsum("a...,ca...->c...", u, gradient(f, grid))


def ericksen_stress(dn, dm):
    """``sigma_ij = <d_i n, d_j n> + <d_i m, d_j m>`` from Jacobians ``(3, 2, ...)``."""
    return np.einsum("ia...,ib...->ab...", dn, dn) + np.einsum("ia...,ib...->ab...", dm, dm)


def stress_divergence(sigma, grid):
    """``(div sigma)_i = sum_j d_j sigma_ij``."""
    shape = sigma.shape[2:]
    g = gradient(sigma.reshape((4,) + shape), grid).reshape((2, 2, 2) + shape)
    return g[:, 0, 0] + g[:, 1, 1]


def divergence(u, grid):
    """Central-difference divergence of a node velocity."""
    g = gradient(u, grid)
    return g[0, 0] + g[1, 1]


def _axis_weights(grid, a):
    w = np.full(grid.shape[a], grid.spacing[a])
    if not grid.periodic(a):
        w[0] *= 0.5
        w[-1] *= 0.5
    return w


def edge_dirichlet(f, grid):
    """``int |grad f|^2`` from forward differences on grid edges.

    Pairs with the 5-point Laplacian by summation by parts, which keeps the discrete
    energy balance free of a spurious O(h^2) mismatch.
    """
    f = np.asarray(f, float)
    lead = f.ndim - grid.ndim
    total = 0.0
    for a in range(grid.ndim):
        ax = lead + a
        if grid.periodic(a):
            d = (np.roll(f, -1, ax) - f) / grid.spacing[a]
        else:
            d = np.diff(f, axis=ax) / grid.spacing[a]
        sq = d * d
        if lead:
            sq = sq.sum(axis=tuple(range(lead)))
        w = np.ones(sq.shape)
        for b in range(grid.ndim):
            wb = np.full(sq.shape[b], grid.spacing[a]) if b == a else _axis_weights(grid, b)
            shp = [1] * grid.ndim
            shp[b] = -1
            w = w * wb.reshape(shp)
        total += float((w * sq).sum())
    return total


def _interior(grid):
    return grid.interior_mask().astype(float)


def _tangential(n, m, fn, fm):
    """Tangential part of ``(fn, fm)`` at ``(n, m)`` without assuming unit length."""
    nn = (n * n).sum(0)
    mm = (m * m).sum(0)
    lam1 = (fn * n).sum(0) / nn
    lam2 = (fm * m).sum(0) / mm
    mu = 0.5 * ((fn * m).sum(0) + (fm * n).sum(0)) / np.sqrt(nn * mm)
    return fn - lam1 * n - mu * m, fm - lam2 * m - mu * n


def cfl_limit(grid, u, nu=None):
    """Largest admissible step for the explicit scheme."""
    h = min(grid.spacing)
    lim = h * h / 8.0
    if nu is not None:
        lim = min(lim, h * h / (8.0 * nu))
    umax = float(np.sqrt((u * u).sum(0)).max()) if u is not None else 0.0
    if umax > 0:
        lim = min(lim, h / (2.0 * umax))
    return lim


def _check_cfl(dt, grid, u, nu=None):
    if not dt > 0:
        raise ValidationError("dt must be > 0", "dt")
    lim = cfl_limit(grid, u, nu)
    if dt > lim * (1 + CFL_SLACK):
        raise CFLViolated(f"dt = {dt:.6g} exceeds stability limit {lim:.6g}")


# ---------------------------------------------------------------------------
# projection


def _project_periodic(u, grid):
    nx, ny = grid.shape
    hx, hy = grid.spacing
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=hx)
    ky = 2 * np.pi * np.fft.fftfreq(ny, d=hy)
    sx = (np.sin(kx * hx) / hx)[:, None]
    sy = (np.sin(ky * hy) / hy)[None, :]
    s2 = sx * sx + sy * sy
    uh = np.fft.fft2(u[0])
    vh = np.fft.fft2(u[1])
    # central-difference symbols: div -> i(s.u), grad -> i s phi
    with np.errstate(divide="ignore", invalid="ignore"):
        phih = np.where(s2 > 1e-12 * s2.max(), -1j * (sx * uh + sy * vh) / s2, 0.0)
    phi = np.real(np.fft.ifft2(phih))
    gphi = np.stack([np.real(np.fft.ifft2(1j * sx * phih)), np.real(np.fft.ifft2(1j * sy * phih))])
    return u - gphi, phi


def _project_box(u, grid, tol, maxiter=None):
    mask = _interior(grid)
    shape = grid.shape
    size = mask.size

    def B(v):
        return mask * divergence(mask * v, grid)

    def Bt(p):
        return -mask * gradient(mask * p, grid)

    def matvec(x):
        return B(Bt(x.reshape(shape))).ravel()

    rhs = B(u).ravel()
    if np.linalg.norm(rhs) <= tol:
        return u * mask, np.zeros(shape)
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    phi, info = cg(op, rhs, rtol=0.0, atol=tol, maxiter=maxiter or 20 * size)
    if info != 0:
        raise PoissonNotConverged(f"projection solve stopped with info={info}")
    phi = phi.reshape(shape)
    return (u - Bt(phi)) * mask, phi


def pressure_projection(u_star: VectorField2D, dt=None, tol=PROJECTION_TOL):
    """Remove the discrete gradient part of ``u_star``.

    Periodic grids use the exact Fourier inverse of the central-difference operator;
    boxes solve ``B B^T phi = B u*`` by conjugate gradients with ``u = 0`` on the walls.
    Returns ``(u, P)`` with ``P = phi / dt`` (``phi`` itself when ``dt`` is None).
    """
    grid = u_star.grid
    u = np.asarray(u_star.values, float)
    if all(grid.periodic(a) for a in range(2)):
        out, phi = _project_periodic(u, grid)
    else:
        out, phi = _project_box(u, grid, tol)
    phi = phi - phi.mean()
    P = phi / dt if dt else phi
    return VectorField2D(grid, out), ScalarField(grid, P)


# ---------------------------------------------------------------------------
# stepping


def velocity_step(state: FlowState, dt):
    grid = state.grid
    u = state.u.values
    _check_cfl(dt, grid, u, state.nu)
    d = state.directors
    sigma = ericksen_stress(gradient(d.n, grid), gradient(d.m, grid))
    rhs = -_advect(u, u, grid) + state.nu * laplacian(u, grid) - stress_divergence(sigma, grid)
    return VectorField2D(grid, (u + dt * rhs) * _interior(grid))


def director_rhs(n, m, u, grid, form="projected"):
    """Right-hand side of the director equations.

    ``form="projected"`` takes the tangential part of ``lap - u.grad`` (exactly
    tangent at every node); ``form="explicit"`` uses the expanded expression
    ``lap n + |grad n|^2 n + <grad n, grad m> m - u.grad n``.
    """
    dn = gradient(n, grid)
    dm = gradient(m, grid)
    fn = laplacian(n, grid)
    fm = laplacian(m, grid)
    if u is not None:
        fn = fn - np.einsum("a...,ca...->c...", u, dn)
        fm = fm - np.einsum("a...,ca...->c...", u, dm)
    if form == "projected":
        return _tangential(n, m, fn, fm)
    if form == "explicit":
        gnn = (dn * dn).sum(axis=(0, 1))
        gmm = (dm * dm).sum(axis=(0, 1))
        gnm = (dn * dm).sum(axis=(0, 1))
        return fn + gnn * n + gnm * m, fm + gmm * m + gnm * n
    raise ValidationError(f"unknown director form {form!r}", "form")


def director_step(state: FlowState, dt, retraction=True, form="projected"):
    """Advance the directors with the velocity stored in ``state``.

    Returns ``(n', m', Dn, Dm)`` where ``D`` is the discrete material derivative
    ``(f' - f)/dt + u.grad f``.
    """
    grid = state.grid
    u = state.u.values
    _check_cfl(dt, grid, u)
    n, m = state.directors.n, state.directors.m
    tn, tm = director_rhs(n, m, u, grid, form)
    mask = _interior(grid)
    n_new = n + dt * tn * mask
    m_new = m + dt * tm * mask
    if retraction:
        n_new, m_new = retract(n_new, m_new)
    return n_new, m_new, material_derivative(n, n_new, u, dt, grid), material_derivative(m, m_new, u, dt, grid)


def material_derivative(f, f_new, u, dt, grid):
    return (f_new - f) / dt + np.einsum("a...,ca...->c...", u, gradient(f, grid))


def state_energies(state: FlowState):
    """``(kinetic, dirichlet_n, dirichlet_m)`` with the 1/2 normalization."""
    grid = state.grid
    u = state.u.values
    kin = 0.5 * float((grid.weights() * (u * u).sum(0)).sum())
    return kin, 0.5 * edge_dirichlet(state.directors.n, grid), 0.5 * edge_dirichlet(state.directors.m, grid)


def energy_budget(prev: FlowState, next: FlowState, dt) -> EnergyBudget:
    grid = prev.grid
    w = grid.weights()
    e_prev = sum(state_energies(prev))
    kin, dn, dm = state_energies(next)
    total = kin + dn + dm
    u = next.u.values
    visc = edge_dirichlet(u, grid)
    Dn = material_derivative(prev.directors.n, next.directors.n, u, dt, grid)
    Dm = material_derivative(prev.directors.m, next.directors.m, u, dt, grid)
    dird = float((w * ((Dn * Dn).sum(0) + (Dm * Dm).sum(0))).sum())
    rate = 2.0 * (total - e_prev) / dt
    return EnergyBudget(
        kinetic=kin,
        dirichlet_n=dn,
        dirichlet_m=dm,
        total=total,
        prev_total=e_prev,
        visc_dissip=visc,
        dir_dissip=dird,
        residual=rate + 2.0 * next.nu * visc + 2.0 * dird,
        residual_printed=rate + 2.0 * dird,
        dt=dt,
        nu=next.nu,
    )


def flow_step(state: FlowState, dt, retraction=True, form="projected"):
    """One split step; returns ``(new_state, EnergyBudget)``."""
    u_star = velocity_step(state, dt)
    u_new, P = pressure_projection(u_star, dt)
    mid = FlowState(state.t, u_new, P, state.directors, state.nu)
    n, m, _, _ = director_step(mid, dt, retraction=retraction, form=form)
    new = FlowState(state.t + dt, u_new, P, DirectorPairField(state.grid, n, m), state.nu)
    return new, energy_budget(state, new, dt)


def run(state: FlowState, dt, horizon, retraction=True, form="projected", callback=None):
    """Step until ``horizon``; ``callback(step, state, budget)`` sees every accepted step."""
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(horizon, dt):
        raise ValidationError("horizon must be a whole number of steps", "horizon")
    budgets = []
    for i in range(steps):
        state, budget = flow_step(state, dt, retraction, form)
        budgets.append(budget)
        if callback is not None:
            callback(i + 1, state, budget)
    return state, budgets


# ---------------------------------------------------------------------------
# diagnostics


def local_energy_density(state: FlowState):
    """``|u|^2 + |grad n|^2 + |grad m|^2`` at the nodes."""
    grid = state.grid
    u = state.u.values
    dn = gradient(state.directors.n, grid)
    dm = gradient(state.directors.m, grid)
    return (u * u).sum(0) + (dn * dn).sum(axis=(0, 1)) + (dm * dm).sum(axis=(0, 1))


def concentration_scan_density(density, grid: GridSpec, r, C0=C0_DEFAULT):
    """Ball integrals of a node density around every node, compared with ``C0``."""
    if r < 2 * max(grid.spacing) * (1 - 1e-12):
        raise ValidationError(f"scan radius {r} below two grid spacings", "r")
    # dirichlet faces carry half (or quarter) cells
    local = ball_sums(np.asarray(density, float) * grid.weights(), grid, r)
    peak = float(local.max())
    fired = peak >= C0
    centers = [tuple(int(i) for i in idx) for idx in zip(*np.nonzero(local >= C0))]
    return ConcentrationReport(local, peak, r, C0, fired, centers)


def concentration_scan(state: FlowState, r, C0=C0_DEFAULT):
    return concentration_scan_density(local_energy_density(state), state.grid, r, C0)


def _disk_mask(grid, center, r):
    offs = [(np.arange(s) - c) * h for s, c, h in zip(grid.shape, center, grid.spacing)]
    d2 = np.zeros(grid.shape)
    for a, o in enumerate(offs):
        if grid.periodic(a):
            L = grid.lengths[a]
            o = (o + 0.5 * L) % L - 0.5 * L
        shp = [1] * grid.ndim
        shp[a] = -1
        d2 = d2 + (o * o).reshape(shp)
    return d2 <= r * r * (1 + 1e-12)


def _time_weights(times):
    times = np.asarray(times, float)
    w = np.zeros_like(times)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def y_quantities(states, center, t0, r):
    """``(Y1, Y2)`` over the parabolic cylinder ``B_r(x0) x [t0 - r^2, t0]``.

    ``center`` is the node index of ``x0``. Space averages use the node-in-disk mask
    with quadrature weights; time averages use the trapezoid rule over the states in
    the window. ``[P]`` is the ball average of P at each time.
    """
    tol = 1e-9 * max(r * r, 1e-300)
    window = [s for s in states if t0 - r * r - tol <= s.t <= t0 + tol]
    if len(window) < 2 or window[0].t > t0 - r * r + tol or window[-1].t < t0 - tol:
        raise WindowTooShort(f"states do not cover [{t0 - r * r:.6g}, {t0:.6g}]")
    grid = window[0].grid
    mask = _disk_mask(grid, center, r)
    ws = grid.weights()[mask]
    wt = _time_weights([s.t for s in window])
    vol = ws.sum() * wt.sum()

    u = np.stack([s.u.values[:, mask] for s in window])
    ubar = np.einsum("tcx,t,x->c", u, wt, ws) / vol
    dev = u - ubar[None, :, None]
    integrand = []
    p_dev = []
    for s, uu in zip(window, dev):
        dn = gradient(s.directors.n, grid)
        dm = gradient(s.directors.m, grid)
        gn = (dn * dn).sum(axis=(0, 1))[mask]
        gm = (dm * dm).sum(axis=(0, 1))[mask]
        integrand.append((uu * uu).sum(0) ** 2 + gn * gn + gm * gm)
        p = s.P.values[mask]
        p_dev.append(np.abs(p - (ws * p).sum() / ws.sum()) ** (4.0 / 3.0))
    mean1 = np.einsum("tx,t,x->", np.array(integrand), wt, ws) / vol
    mean2 = np.einsum("tx,t,x->", np.array(p_dev), wt, ws) / vol
    return float(mean1 ** 0.25), float(r * mean2 ** 0.75)


def rescale_state(state: FlowState, r, t0=0.0) -> FlowState:
    """Parabolic rescaling ``(r u, n, m, r^2 P)(x0 + r x, t0 + r^2 t)`` on the node set.

    Node values are kept; the grid spacing shrinks by ``r`` and time is mapped to
    ``(t - t0) / r^2``.
    """
    g = state.grid
    grid = GridSpec(g.dims, tuple(h / r for h in g.spacing), g.boundary)
    return FlowState(
        (state.t - t0) / (r * r),
        VectorField2D(grid, r * state.u.values),
        ScalarField(grid, r * r * state.P.values),
        DirectorPairField(grid, state.directors.n, state.directors.m),
        state.nu,
    )


def constraint_drift(state: FlowState):
    return max(constraint_residuals(state.directors))


def bubble_probe(grid: GridSpec, widths, r=None, make_field=None):
    """Energy carried by a shrinking rotation bubble.

    For each width the concentrated-bump director pair is built on ``grid`` and the
    total ``int(|grad n|^2 + |grad m|^2)`` and the largest ball integral of radius ``r``
    are returned as ``(width, total, peak)``. The limit of ``total`` as the width shrinks
    estimates the energy quantum of this profile, an upper bound for the bubble
    threshold when the profile is harmonic.
    """
    if make_field is None:
        from .initial import concentrated_bump

        make_field = concentrated_bump
    if r is None:
        r = 0.25 * min(grid.lengths)
    out = []
    for lam in widths:
        d = make_field(grid, lam)
        state = FlowState.at_rest(d)
        dens = local_energy_density(state)
        total = float((grid.weights() * dens).sum())
        rep = concentration_scan_density(dens, grid, r, np.inf)
        out.append((float(lam), total, rep.max_local))
    return out

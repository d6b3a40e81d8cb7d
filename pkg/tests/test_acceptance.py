"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line through the ``report`` fixture; the lines are
collected in the terminal summary. The heavy flow runs are shared between criteria
through module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from biaxial import cli, hydro
from biaxial.energy import (
    FrankConstants,
    blowup_form,
    ellipticity_margin,
    modified_density,
    total_energy,
    variational_gradient,
)
from biaxial.errors import NotConverged
from biaxial.fields import (
    DirectorPairField,
    GridSpec,
    ScalarField,
    VectorField2D,
    frame_from_rotations,
    rotation_matrices,
)
from biaxial.initial import circle_wave, generate_initial
from biaxial.io import decode_snapshot, encode_snapshot, read_snapshot, state_snapshot, write_snapshot
from biaxial.minimize import MinimizeConfig, el_residual, harmonic_extension
from biaxial.minimize import minimize as run_minimize

import oracles

SEED = 20240611


def _tangent_batch(rng, count):
    """Random points of N with random tangent Jacobians ``d_a n = w_a x n``."""
    q, r = np.linalg.qr(rng.normal(size=(count, 3, 3)))
    q = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    n, m = q[:, :, 2], q[:, :, 0]
    omega = rng.normal(size=(3, count, 3))
    Dn = np.stack([np.cross(omega[a], n) for a in range(3)], axis=-1)  # (count, 3, 3)
    Dm = np.stack([np.cross(omega[a], m) for a in range(3)], axis=-1)
    return n.T, m.T, np.moveaxis(Dn, 0, -1), np.moveaxis(Dm, 0, -1)


# ---------------------------------------------------------------------------
# energy


def test_c1_coercivity(report):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = np.inf
    for _ in range(1000):
        k = FrankConstants(oracles.random_frank(rng))
        n, m, Dn, Dm = _tangent_batch(rng, 1000)
        w = modified_density(n, m, Dn, Dm, k)
        floor = 0.5 * (k.alpha1 * (Dn * Dn).sum(axis=(0, 1)) + k.alpha2 * (Dm * Dm).sum(axis=(0, 1)))
        worst = min(worst, float((w - floor).min()))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-12 and elapsed < 30
    report("C1", ok, f"min slack {worst:.3e} over 1e6 samples (need >= -1e-12), {elapsed:.1f}s")
    assert ok


def test_c2_one_constant_reduction(report):
    rng = np.random.default_rng(SEED + 1)
    k = FrankConstants.one_constant()
    n, m, Dn, Dm = _tangent_batch(rng, 100_000)
    w = modified_density(n, m, Dn, Dm, k)
    dirichlet = 0.5 * ((Dn * Dn).sum(axis=(0, 1)) + (Dm * Dm).sum(axis=(0, 1)))
    err = float(np.abs(w - dirichlet).max())
    ok = err <= 1e-12
    report("C2", ok, f"max |W~ - Dirichlet| {err:.3e} over 1e5 samples (need <= 1e-12)")
    assert ok


def test_c3_strong_ellipticity(report):
    rng = np.random.default_rng(SEED + 2)
    t0 = time.perf_counter()
    worst = np.inf
    all_pass = True
    for _ in range(200):
        k = FrankConstants(oracles.random_frank(rng))
        lam, passes = ellipticity_margin(blowup_form(k), k)
        all_pass &= passes and lam >= 0.5 * k.alpha3 - 1e-10
        worst = min(worst, lam - 0.5 * k.alpha3)
    one = FrankConstants.one_constant()
    lam1, _ = ellipticity_margin(blowup_form(one), one)
    elapsed = time.perf_counter() - t0
    ok = all_pass and lam1 >= 0.5 - 1e-12 and elapsed < 10
    report("C3", ok, f"min (lambda - alpha3/2) {worst:.3e}; one-constant lambda {lam1:.12g}; {elapsed:.2f}s")
    assert ok


def _frame_pair(N, amp_seed):
    """Two 3-D fields on [0,1]^3 with the same boundary values."""
    g = GridSpec.uniform(3, N, 1.0, "dirichlet")
    x, y, z = g.coords()
    rng = np.random.default_rng(amp_seed)
    c = rng.normal(size=(3, 3))
    base = np.stack([0.8 * (c[i, 0] * np.sin(2 * x + y) + c[i, 1] * np.cos(3 * z - x) + c[i, 2] * x * y * z)
                     for i in range(3)])
    bump = (np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)) ** 2
    extra = np.stack([1.5 * bump * np.cos(2 * y), -bump, 0.7 * bump * np.sin(3 * x)])
    a = frame_from_rotations(rotation_matrices(base))
    b = frame_from_rotations(rotation_matrices(base + extra))
    return DirectorPairField(g, *a).retracted(), DirectorPairField(g, *b).retracted()


def test_c4_null_lagrangian(report):
    t0 = time.perf_counter()
    k = FrankConstants.one_constant()
    diffs, scale = [], []
    for N in (16, 32):
        A, B = _frame_pair(N, SEED)
        ea, eb = total_energy(A, k), total_energy(B, k)
        diffs.append(abs(ea.null_n - eb.null_n) + abs(ea.null_m - eb.null_m))
        scale.append(abs(ea.null_n) + abs(ea.null_m) + abs(eb.null_n) + abs(eb.null_m))
        assert abs(ea.dirichlet - eb.dirichlet) > 1e-3  # the interiors really differ
    elapsed = time.perf_counter() - t0
    # the discrete null Lagrangian is boundary-determined exactly, so both differences
    # can sit at the rounding floor, where the ratio carries no information
    floor = [64 * np.finfo(float).eps * s for s in scale]
    at_floor = all(d <= f for d, f in zip(diffs, floor))
    ratio = diffs[0] / diffs[1] if diffs[1] > 0 else np.inf
    ok = (ratio >= 3 or at_floor) and elapsed < 120
    report("C4", ok, f"|NL(A)-NL(B)| 16^3 {diffs[0]:.3e}, 32^3 {diffs[1]:.3e}, ratio {ratio:.3g}, "
                     f"rounding floor {'reached' if at_floor else 'not reached'}; {elapsed:.1f}s")
    assert ok


def test_c5_gradient(report):
    rng = np.random.default_rng(SEED + 5)
    t0 = time.perf_counter()
    g = GridSpec.uniform(3, 12, 1.0, "dirichlet")
    x, y, z = g.coords()
    c = rng.normal(size=(3, 3))
    om = np.stack([0.7 * (c[i, 0] * np.sin(2 * x + c[i, 1]) + c[i, 2] * np.cos(3 * y * z)) for i in range(3)])
    f = DirectorPairField(g, *frame_from_rotations(rotation_matrices(om))).retracted()
    k = FrankConstants(oracles.random_frank(rng, zero_prob=0.0))
    fn, fm = variational_gradient(f, k)
    mask = g.interior_mask()
    eps = 1e-6
    worst = 0.0
    for _ in range(50):
        dn, dm = rng.normal(size=(2, 3) + g.shape) * mask
        e = lambda s: total_energy(DirectorPairField(g, f.n + s * dn, f.m + s * dm), k).modified
        fd = (e(eps) - e(-eps)) / (2 * eps)
        an = float((fn * dn).sum() + (fm * dm).sum())
        worst = max(worst, abs(an - fd) / max(abs(an), abs(fd)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60
    report("C5", ok, f"max relative error {worst:.3e} over 50 directions on 12^3 (need <= 1e-6); {elapsed:.1f}s")
    assert ok


def test_c6_minimizer(report):
    t0 = time.perf_counter()
    g = GridSpec.uniform(3, 16, 1.0, "dirichlet")
    k = FrankConstants.one_constant()
    boundary = circle_wave(g, 1.0)
    cfg = MinimizeConfig(g, k, tol=1e-6, max_iter=20000)
    try:
        res = run_minimize(cfg, harmonic_extension(g, boundary.n, boundary.m), raise_on_failure=True)
    except NotConverged as exc:
        res = exc.result
    elapsed = time.perf_counter() - t0
    trace = np.array(res.energy_trace)
    monotone = bool(np.all(np.diff(trace) <= 1e-13 * np.abs(trace[:-1])))
    el_norm = el_residual(res.field, k)[-1]
    m_dev = float(np.abs(res.field.m - np.array([0, 0, 1.0])[:, None, None, None]).max())
    ok = res.converged and res.grad_norm <= 1e-6 and monotone and el_norm <= 1e-5 and m_dev <= 1e-6 \
        and elapsed < 300
    report("C6", ok, f"{res.iterations} iterations, grad norm {res.grad_norm:.3e}, monotone {monotone}, "
                     f"el_residual {el_norm:.3e}, |m - e3| {m_dev:.3e}; {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# flow


def _track(state, dt, horizon, retraction=True):
    """Run and record per-step budgets, max |u| and constraint error."""
    umax = [float(np.sqrt((state.u.values ** 2).sum(0)).max())]
    drift = [hydro.constraint_drift(state)]

    def cb(step, s, budget):
        umax.append(float(np.sqrt((s.u.values ** 2).sum(0)).max()))
        drift.append(hydro.constraint_drift(s))

    t0 = time.perf_counter()
    final, budgets = hydro.run(state, dt, horizon, retraction=retraction, callback=cb)
    return {"final": final, "budgets": budgets, "umax": umax, "drift": drift, "dt": dt,
            "seconds": time.perf_counter() - t0}


def _summed_residual(run):
    return float(sum(abs(b.residual) for b in run["budgets"]) * run["dt"])


def _taylor_green(N, dt):
    g = GridSpec.uniform(2, N, 2 * np.pi, "periodic")
    u0, d = generate_initial("taylor-green", 0, g)
    state = hydro.FlowState(0.0, u0, ScalarField.zeros(g), d, 1.0)
    run = _track(state, dt, 0.5)
    run["k0"] = hydro.state_energies(state)[0]
    return run


def _circle_state(N):
    g = GridSpec.uniform(2, N, 2 * np.pi, "periodic")
    x, y = g.coords()
    theta = oracles.heat_theta(x, y, 0.0)
    z = np.zeros_like(theta)
    d = DirectorPairField(g, np.stack([np.cos(theta), np.sin(theta), z]), np.stack([z, z, z + 1.0]))
    return hydro.FlowState.at_rest(d)


@pytest.fixture(scope="module")
def tg_runs():
    return {64: _taylor_green(64, 1e-3), 128: _taylor_green(128, 2.5e-4)}


@pytest.fixture(scope="module")
def circle_runs():
    return {64: _track(_circle_state(64), 1e-3, 0.5), 128: _track(_circle_state(128), 2.5e-4, 0.5)}


def test_c7_taylor_green(report, tg_runs):
    errs = {}
    for N, run in tg_runs.items():
        k = hydro.state_energies(run["final"])[0]
        exact = oracles.taylor_green_kinetic(run["final"].t, 1.0, run["k0"])
        errs[N] = abs(k - exact) / exact
    ratio = errs[64] / errs[128]
    seconds = sum(r["seconds"] for r in tg_runs.values())
    ok = errs[64] <= 0.02 and 3 <= ratio <= 5 and seconds < 120
    report("C7", ok, f"relative K error 64^2 {errs[64]:.3e}, 128^2 {errs[128]:.3e}, ratio {ratio:.3f}; "
                     f"{seconds:.1f}s")
    assert ok


def test_c8_circle_coupled(report, circle_runs):
    run = circle_runs[64]
    final = run["final"]
    g = final.grid
    x, y = g.coords()
    w = g.weights()
    theta_ex = oracles.heat_theta(x, y, final.t)
    n_ex = np.stack([np.cos(theta_ex), np.sin(theta_ex), 0 * x])
    theta = np.arctan2(final.directors.n[1], final.directors.n[0])
    l2 = lambda f: float(np.sqrt((w * f * f).sum()))
    err_theta = l2(theta - theta_ex) / l2(theta_ex)
    err_n = l2(np.sqrt(((final.directors.n - n_ex) ** 2).sum(0))) / np.sqrt(w.sum())
    e0 = sum(hydro.state_energies(_circle_state(64))[1:])
    umax = max(run["umax"])
    ok = err_theta <= 0.01 and umax <= 1e-3 * e0 and run["seconds"] < 180
    report("C8", ok, f"relative L2 error of the angle {err_theta:.3e} (n: {err_n:.3e}), "
                     f"max|u| {umax:.3e} vs bound {1e-3 * e0:.3e}; {run['seconds']:.1f}s")
    assert ok


def test_c9_energy_law(report, tg_runs, circle_runs):
    lines, ok = [], True
    for name, runs in (("taylor-green", tg_runs), ("circle", circle_runs)):
        mono = all(b.nonincreasing() for r in runs.values() for b in r["budgets"])
        s64, s128 = _summed_residual(runs[64]), _summed_residual(runs[128])
        ratio = s64 / s128
        ok &= mono and ratio >= 1.8
        lines.append(f"{name}: nonincreasing {mono}, summed residual {s64:.3e} -> {s128:.3e} (x{ratio:.2f})")
    report("C9", ok, "; ".join(lines))
    assert ok


def test_c10_constraints(report, circle_runs):
    on = max(max(r["drift"]) for r in circle_runs.values())
    off = {dt: _track(_circle_state(64), dt, 0.5, retraction=False)["drift"][-1] for dt in (1e-3, 5e-4)}
    ratio = off[1e-3] / off[5e-4]
    ok = on <= 1e-12 and 1.6 <= ratio <= 2.4
    report("C10", ok, f"max constraint error with retraction {on:.3e}; without: drift {off[1e-3]:.3e} (dt 1e-3) "
                      f"-> {off[5e-4]:.3e} (dt 5e-4), ratio {ratio:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# diagnostics and io


def test_c11_concentration(report):
    t0 = time.perf_counter()
    C0 = hydro.C0_DEFAULT
    r = 0.5
    # r = 16 h, so the node-in-disk count is within 1% of the disk area
    g = GridSpec.uniform(2, 256, 8.0, "periodic")
    x, y = g.coords()
    directors = DirectorPairField.constant(g)
    cases, worst, ok = 0, 0.0, True

    # uniform speed: local energy is |U|^2 pi r^2 at every center
    for factor in (0.3, 0.8, 1.25, 3.0):
        e = factor * C0 / (np.pi * r * r)
        u = np.stack([np.full(g.shape, np.sqrt(e)), np.zeros(g.shape)])
        rep = hydro.concentration_scan(hydro.FlowState(0.0, VectorField2D(g, u), ScalarField.zeros(g), directors), r, C0)
        exact = e * np.pi * r * r
        worst = max(worst, float(np.abs(rep.local - exact).max()) / C0)
        ok &= rep.fired == (exact >= C0)
        cases += 1

    # Gaussian bump of |u|^2 with total mass M: local energy is the disk mass
    sigma, c = 0.3, (4.0, 4.0)
    dist = np.hypot(x - c[0], y - c[1])
    for mass in (0.5 * C0, 1.1 * C0, 2.0 * C0):
        dens = mass / (2 * np.pi * sigma ** 2) * np.exp(-dist ** 2 / (2 * sigma ** 2))
        u = np.stack([np.sqrt(dens), np.zeros(g.shape)])
        rep = hydro.concentration_scan(hydro.FlowState(0.0, VectorField2D(g, u), ScalarField.zeros(g), directors), r, C0)
        pred = oracles.gaussian_disk_mass(mass, sigma, dist, r)
        worst = max(worst, float(np.abs(rep.local - pred).max()) / C0)
        clear = np.abs(pred - C0) > 0.05 * C0
        ok &= bool(np.all((rep.local >= C0)[clear] == (pred >= C0)[clear]))
        ok &= rep.fired == bool(pred.max() >= C0)
        cases += 1
    elapsed = time.perf_counter() - t0
    ok = ok and worst <= 0.05 and elapsed < 30
    report("C11", ok, f"{cases} cases fire as predicted; max disk-mask error {worst:.3e} C0 (need <= 0.05); "
                      f"{elapsed:.1f}s")
    assert ok


def test_c12_determinism(report, tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text("mode = flow2d\nnx = 24\nny = 24\ndt = 0.005\nhorizon = 0.1\nrecipe = random-smooth\n"
                   "snapshot_every = 5\nconcentration_radius = 1.0\n")
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [cli.main(["flow2d", "--config", str(cfg), "--out", str(o), "--seed", "77"]) for o in outs]
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "config.txt")
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    snaps = [f for f in files if f.endswith(".bin")]
    # round trip: read -> encode reproduces the file, and a state round trips bit-exactly
    trip = all(encode_snapshot(read_snapshot(outs[0] / f)) == (outs[0] / f).read_bytes() for f in snaps)
    g = GridSpec.uniform(2, 16, 1.0, "periodic")
    u, d = generate_initial("random-smooth", 5, g)
    state = hydro.FlowState(0.0, u, ScalarField.zeros(g), d)
    write_snapshot(state, tmp_path / "s.bin")
    back = read_snapshot(tmp_path / "s.bin")
    trip &= back == state_snapshot(state) and decode_snapshot(encode_snapshot(back)) == back
    ok = codes == [0, 0] and same and trip and "timeseries.csv" in files and len(snaps) >= 2
    report("C12", ok, f"{len(files)} output files byte-identical across runs: {same}; round trips bit-exact: {trip}")
    assert ok

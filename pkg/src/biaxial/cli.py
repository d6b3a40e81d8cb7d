"""Command line entry point: ``biaxial <mode> --config FILE [--out DIR] [--seed N]``.

Exit codes: 0 success, 2 invalid input, 3 runtime failure (divergence, no convergence,
failed diagnostic).
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import hydro
from .config import MODES, RunConfig, load_config, write_config
from .energy import blowup_form, ellipticity_margin, total_energy
from .errors import BiaxialError, NotConverged, ParseError, UnknownRecipe, ValidationError
from .fields import ScalarField, constraint_residuals
from .initial import generate_initial
from .io import Snapshot, StepRecord, director_fields, write_snapshot, write_timeseries
from .minimize import MinimizeConfig, harmonic_extension, minimize

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _threads():
    raw = os.environ.get("BIAXIAL_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ValidationError(f"BIAXIAL_THREADS must be a positive integer, got {raw!r}", "BIAXIAL_THREADS")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _record(step, state, budget, radius, c0):
    kin, dn, dm = hydro.state_energies(state)
    errn, errm, dot = constraint_residuals(state.directors)
    scan = hydro.concentration_scan(state, radius, c0)
    return StepRecord(
        step=step,
        time=state.t,
        kinetic=kin,
        dirichlet_n=dn,
        dirichlet_m=dm,
        total=kin + dn + dm,
        visc_dissip=budget.visc_dissip if budget else 0.0,
        dir_dissip=budget.dir_dissip if budget else 0.0,
        budget_residual=budget.residual if budget else 0.0,
        max_norm_err_n=errn,
        max_norm_err_m=errm,
        max_dot_nm=dot,
        max_local_energy=scan.max_local,
        concentration_fired=int(scan.fired),
    )


def run_flow2d(cfg: RunConfig, out: Path):
    if cfg.ndim != 2:
        raise ValidationError("flow2d needs ndim = 2", "ndim")
    grid = cfg.grid()
    if cfg.concentration_radius < 2 * max(grid.spacing):
        raise ValidationError("concentration_radius must be at least two grid spacings", "concentration_radius")
    u0, directors = generate_initial(cfg.recipe, cfg.seed, grid, cfg.recipe_params())
    state = hydro.FlowState(0.0, u0, ScalarField.zeros(grid), directors, cfg.nu)
    limit = hydro.cfl_limit(grid, u0.values, cfg.nu)
    if cfg.dt > limit * (1 + hydro.CFL_SLACK):
        raise ValidationError(f"dt = {cfg.dt} exceeds the stability limit {limit:.6g}", "dt")
    steps = int(round(cfg.horizon / cfg.dt))

    records = [_record(0, state, None, cfg.concentration_radius, cfg.c0)]
    write_snapshot(state, out / "snapshot_000000.bin")
    for step in range(1, steps + 1):
        state, budget = hydro.flow_step(state, cfg.dt, retraction=cfg.retraction)
        records.append(_record(step, state, budget, cfg.concentration_radius, cfg.c0))
        if (cfg.snapshot_every and step % cfg.snapshot_every == 0) or step == steps:
            write_snapshot(state, out / f"snapshot_{step:06d}.bin")
    write_timeseries(records, out / "timeseries.csv")
    last = records[-1]
    print(f"steps {steps} time {last.time:.6g} total {last.total:.12g} "
          f"max_budget_residual {max(abs(r.budget_residual) for r in records):.3e} "
          f"fired {int(any(r.concentration_fired for r in records))}")
    return EXIT_OK


def run_minimize(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    mc = MinimizeConfig(grid, cfg.frank(), tau=cfg.tau, max_iter=cfg.max_iter, tol=cfg.tol,
                        eps0_sq=cfg.eps0_sq, theta0=cfg.theta0, radii=cfg.scan_radii)
    _, boundary = generate_initial(cfg.recipe, cfg.seed, grid, cfg.recipe_params())
    initial = harmonic_extension(grid, boundary.n, boundary.m)
    code = EXIT_OK
    try:
        result = minimize(mc, initial, raise_on_failure=True)
    except NotConverged as exc:
        result = exc.result
        code = EXIT_RUNTIME
        print(f"not converged: {exc}", file=sys.stderr)
    snap = director_fields(result.field)
    snap.update({"lambda1": result.lambda1, "lambda2": result.lambda2, "mu": result.mu})
    write_snapshot(Snapshot(grid.shape, snap), out / "minimizer.bin")
    lines = ["iteration,energy"] + [f"{i},{format(e, '.17g')}" for i, e in enumerate(result.energy_trace)]
    _write_text(out / "trace.csv", "\n".join(lines) + "\n")
    lines = ["i,j,k,radius,value"] + [
        f"{c.center[0]},{c.center[1]},{c.center[2]},{format(c.radius, '.17g')},{format(c.value, '.17g')}"
        for c in result.candidates
    ]
    _write_text(out / "candidates.csv", "\n".join(lines) + "\n")
    print(f"iterations {result.iterations} energy {result.energy_trace[-1]:.12g} "
          f"grad_norm {result.grad_norm:.3e} converged {int(result.converged)} "
          f"candidates {len(result.candidates)}")
    return code


def run_ellipticity(cfg: RunConfig, out: Path):
    k = cfg.frank()
    lam, ok = ellipticity_margin(blowup_form(k), k)
    print(f"lambda_min {lam:.17g} bound {0.5 * k.alpha3:.17g} passes {int(ok)}")
    return EXIT_OK if ok else EXIT_RUNTIME


def run_check(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    k = cfg.frank()
    u0, directors = generate_initial(cfg.recipe, cfg.seed, grid, cfg.recipe_params())
    errs = constraint_residuals(directors)
    print(f"grid {'x'.join(map(str, grid.shape))} spacing {', '.join(f'{h:.6g}' for h in grid.spacing)}")
    print(f"constraint {errs[0]:.3e} {errs[1]:.3e} {errs[2]:.3e}")
    ok = max(errs) <= 1e-12
    if grid.ndim == 3:
        br = total_energy(directors, k)
        print(f"frank {br.frank:.12g} modified {br.modified:.12g} dirichlet {br.dirichlet:.12g}")
    else:
        state = hydro.FlowState(0.0, u0, ScalarField.zeros(grid), directors, cfg.nu)
        kin, dn, dm = hydro.state_energies(state)
        div = float(np.abs(hydro.divergence(u0.values, grid) * grid.interior_mask()).max())
        limit = hydro.cfl_limit(grid, u0.values, cfg.nu)
        print(f"kinetic {kin:.12g} dirichlet_n {dn:.12g} dirichlet_m {dm:.12g}")
        print(f"max_div {div:.3e} cfl_limit {limit:.6g} dt {cfg.dt:.6g}")
        ok = ok and cfg.dt <= limit * (1 + hydro.CFL_SLACK)
    lam, elliptic = ellipticity_margin(blowup_form(k), k)
    print(f"lambda_min {lam:.12g} passes {int(elliptic)}")
    ok = ok and elliptic
    print("ok" if ok else "failed")
    return EXIT_OK if ok else EXIT_RUNTIME


def run_bubble_probe(cfg: RunConfig, out: Path):
    if cfg.ndim != 2:
        raise ValidationError("bubble-probe needs ndim = 2", "ndim")
    grid = cfg.grid()
    widths = [cfg.bump_width * 0.5 ** j for j in range(4)]
    rows = hydro.bubble_probe(grid, widths, cfg.concentration_radius)
    lines = ["width,total,peak"] + [",".join(format(v, ".17g") for v in row) for row in rows]
    _write_text(out / "bubble.csv", "\n".join(lines) + "\n")
    for lam, total, peak in rows:
        print(f"width {lam:.6g} total {total:.12g} peak {peak:.12g}")
    print(f"c0 {cfg.c0:.12g}")
    return EXIT_OK


RUNNERS = {
    "flow2d": run_flow2d,
    "minimize": run_minimize,
    "check": run_check,
    "ellipticity": run_ellipticity,
    "bubble-probe": run_bubble_probe,
}


def build_parser():
    p = argparse.ArgumentParser(prog="biaxial", description="Biaxial nematic energy and flow toolkit")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {"mode": args.mode}
        if args.out is not None:
            overrides["out"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = dataclasses.replace(cfg, **overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "config.txt", write_config(cfg))
        with _threads():
            return RUNNERS[cfg.mode](cfg, out)
    except (ValidationError, ParseError, UnknownRecipe, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BiaxialError as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

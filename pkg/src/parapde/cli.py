"""Command-line front end.

Subcommands: decompose, check-ellipticity, probe-sector, solve, solve-sde,
convergence.  Every command reads a YAML run configuration, validates the
admissibility gates, runs, and writes a manifest plus PFLD/CSV artifacts
into the output directory.

Exit codes: 0 success, 2 hypothesis or configuration violation, 3 runtime
halt (norm blow-up or region exit), 4 solver failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, validate_run
from .errors import ConfigurationError, ParapdeError, RegionExitError, SolverFailureError
from .evolve import (HALT_BLOWUP, HALT_COMPLETED, HALT_REGION, HALT_SOLVER,
                     ManufacturedSolution, convergence_study,
                     regularization_diagnostic, single_mode_field, solve)
from .fieldio import write_csv, write_field, write_manifest
from .operators import paradiff_handle, sector_probe
from .paradiff import (build_symbol, decomposition_residual, shift_from_report,
                       smooth_symbol, symbol_ellipticity)
from .problems import eval_F, jet
from .sde import RNG_ALGORITHM, solve_paths
from .spectral import random_smooth_field, trace_norm

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_HALT = 3
EXIT_SOLVER = 4

_HALT_EXIT = {
    HALT_COMPLETED: EXIT_OK,
    HALT_BLOWUP: EXIT_HALT,
    HALT_REGION: EXIT_HALT,
    HALT_SOLVER: EXIT_SOLVER,
}


def _c2_scaled_field(rc: RunConfig, rng, c2_bound: float):
    """Random band-limited field scaled to the requested second-derivative size."""
    u = random_smooth_field(rc.grid, rng, decay=3.0, kcut=rc.grid.xi_max / 2.0)
    j = jet(u, 2) if rc.problem.m >= 2 else None
    sup = max(float(np.max(np.abs(v))) for v in j.eta.values())
    return u * (c2_bound / sup) if sup > 0 else u


def _finish(rc: RunConfig, command: str, statuses: dict, files: list,
            t_start: float) -> None:
    write_manifest(rc.output_dir / "manifest.yaml", command, rc.raw, statuses,
                   files, time.time() - t_start, RNG_ALGORITHM)


def cmd_decompose(rc: RunConfig) -> int:
    t0 = time.time()
    ex = rc.extras.get("decompose", {})
    num = int(ex.get("num_fields", 10))
    c2 = float(ex.get("c2_bound", 2.0))
    factor = float(ex.get("tolerance_factor", 1e-8))
    nodes = int(ex.get("quadrature_nodes", 8))
    rng = np.random.default_rng((rc.seed, 0xDEC0))
    rows = []
    files = []
    status = "ok"
    try:
        for i in range(num):
            u = _c2_scaled_field(rc, rng, c2)
            resid = decomposition_residual(rc.problem, u, rc.bank, nodes)
            f_sup = eval_F(rc.problem, jet(u, rc.problem.m)).sup_norm()
            tol = factor * (1.0 + f_sup)
            rows.append((i, resid, f_sup, tol, resid <= tol))
            if i == 0:
                from .paradiff import G, apply_symbol

                sym = build_symbol(rc.problem, u, rc.bank, nodes)
                files.append(write_field(rc.output_dir / "fields/state.pfld", u))
                files.append(write_field(rc.output_dir / "fields/full_nonlinearity.pfld",
                                         eval_F(rc.problem, jet(u, rc.problem.m))))
                files.append(write_field(rc.output_dir / "fields/band_operator_part.pfld",
                                         apply_symbol(sym, u)))
                files.append(write_field(rc.output_dir / "fields/smooth_part.pfld",
                                         G(rc.problem, u, rc.bank)))
    except RegionExitError as exc:
        status = f"{HALT_REGION}: {exc}"
    files.append(write_csv(rc.output_dir / "decompose.csv",
                           ["field_index", "residual", "f_sup", "tolerance", "passed"],
                           rows))
    _finish(rc, "decompose", {"status": status}, files, t0)
    return EXIT_HALT if status.startswith(HALT_REGION) else EXIT_OK


def cmd_check_ellipticity(rc: RunConfig) -> int:
    t0 = time.time()
    ex = rc.extras.get("ellipticity", {})
    ball = float(ex.get("ball_radius", 2.0))
    num = int(ex.get("num_states", 5))
    delta = float(ex.get("delta", 0.5))
    xs = int(ex.get("x_samples", 16))
    xis = int(ex.get("xi_samples", 48))
    rng = np.random.default_rng((rc.seed, 0xE111))
    rows = []
    files = []
    all_passed = True
    for i in range(num):
        u = random_smooth_field(rc.grid, rng, decay=3.0, kcut=rc.grid.xi_max / 2.0)
        tn = trace_norm(u, rc.space, rc.bank)
        if tn > 0:
            u = u * (0.9 * ball / tn)
        sym = build_symbol(rc.problem, u, rc.bank)
        rep = symbol_ellipticity(smooth_symbol(sym, delta), n=ball,
                                 x_samples=xs, xi_samples=xis)
        rows.append((i, rep.c, rep.L, rep.lower_order_sup, rep.c_required, rep.passed))
        all_passed &= rep.passed
        files.append(write_field(rc.output_dir / f"fields/state_{i:03d}.pfld", u))
    files.append(write_csv(rc.output_dir / "ellipticity.csv",
                           ["state_index", "c_measured", "threshold_L",
                            "lower_order_sup", "c_required", "passed"], rows))
    _finish(rc, "check-ellipticity", {"all_passed": bool(all_passed)}, files, t0)
    return EXIT_OK


def cmd_probe_sector(rc: RunConfig) -> int:
    t0 = time.time()
    ex = rc.extras.get("sector", {})
    thetas = [float(x) for x in ex.get(
        "thetas", [math.pi / 12, math.pi / 6, math.pi / 4, math.pi / 3,
                   math.pi / 2, 2 * math.pi / 3, 5 * math.pi / 6])]
    decades = ex.get("radius_decades", [-1.0, 4.0])
    radii = np.geomspace(10.0 ** float(decades[0]), 10.0 ** float(decades[1]),
                         int(ex.get("num_radii", 6)))
    sym = build_symbol(rc.problem, rc.u0, rc.bank)
    rep_ell = symbol_ellipticity(sym, n=max(1.0, math.ceil(
        trace_norm(rc.u0, rc.space, rc.bank))))
    lam = shift_from_report(rep_ell, rc.bank, rc.problem.m,
                            margin=float(ex.get("shift_margin", 1.0)))
    handle = paradiff_handle(sym, shift=lam)
    report = sector_probe(handle, thetas, radii,
                          probes=int(ex.get("probes", 4)),
                          power_steps=int(ex.get("power_steps", 20)),
                          s=rc.space.s, seed=rc.seed)
    rows = []
    for i, th in enumerate(report.thetas):
        for j, r in enumerate(report.radii):
            rows.append((th, r, report.estimates[i, j], not report.failed[i, j]))
    files = [write_field(rc.output_dir / "fields/state.pfld", rc.u0),
             write_csv(rc.output_dir / "sector.csv",
                       ["theta", "radius", "estimate", "converged"], rows)]
    text = (f"sector probe ({report.norm_label})\n"
            f"operator: {handle.label} + shift {lam:g}\n"
            f"estimated spectral angle: {report.phi_estimate:.6f} rad\n"
            f"resolvent bound on probed rays: {report.bound:.6g}\n")
    rpt = rc.output_dir / "sector_report.txt"
    rpt.write_text(text)
    files.append(rpt)
    _finish(rc, "probe-sector",
            {"phi_estimate": float(report.phi_estimate),
             "bound": float(report.bound), "shift": float(lam)}, files, t0)
    return EXIT_OK


def cmd_solve(rc: RunConfig) -> int:
    t0 = time.time()
    if rc.stepper is None or rc.stepper_t_final is None:
        raise ConfigurationError("solve needs a stepper block with dt and t_final")
    traj = solve(rc.problem, rc.u0, rc.stepper_t_final, rc.bank, rc.stepper,
                 forcing=rc.forcing, snapshot_stride=rc.snapshot_stride)
    files = []
    for i, (t, u) in enumerate(traj.snapshots):
        files.append(write_field(rc.output_dir / f"fields/u_{i:06d}.pfld", u))
    rows = [(k, traj.times[k], traj.trace_norms[k], traj.region_distances[k],
             traj.krylov_iterations[k - 1] if k else 0)
            for k in range(len(traj.times))]
    files.append(write_csv(rc.output_dir / "trajectory.csv",
                           ["step", "time", "trace_norm", "region_distance",
                            "krylov_iterations"], rows))
    if len(traj.snapshots) >= 2:
        times, tails = regularization_diagnostic(traj, rc.bank, rc.space.r)
        files.append(write_csv(rc.output_dir / "tail.csv", ["time", "tail_norm"],
                               list(zip(times, tails))))
    _finish(rc, "solve",
            {"halt_status": traj.halt_status, "halt_detail": traj.halt_detail,
             "t_final": traj.t_final}, files, t0)
    return _HALT_EXIT[traj.halt_status]


def cmd_solve_sde(rc: RunConfig) -> int:
    t0 = time.time()
    if rc.sde is None:
        raise ConfigurationError("solve-sde needs an sde block")
    ens = solve_paths(rc.problem, rc.u0, rc.bank, rc.sde)
    header = ["path", "status", "t_final", "terminal_trace_norm",
              "max_increment", "lq_smooth_integral"]
    header += [f"sigma_at_{n:g}" for n in rc.sde.thresholds]
    rows = []
    for p in ens.paths:
        row = [p.path, p.status, p.t_final,
               trace_norm(p.terminal, rc.space, rc.bank),
               p.max_increment, p.lq_smooth_integral]
        row += [p.sigma[n] for n in rc.sde.thresholds]
        rows.append(row)
    files = [write_csv(rc.output_dir / "ensemble.csv", header, rows)]
    for p in ens.paths:
        for i, (t, u) in enumerate(p.snapshots):
            files.append(write_field(
                rc.output_dir / f"fields/path_{p.path:04d}_{i:06d}.pfld", u))
    statuses = {s: sum(1 for p in ens.paths if p.status == s)
                for s in sorted({p.status for p in ens.paths})}
    _finish(rc, "solve-sde",
            {"path_statuses": statuses,
             "fraction_stopped": ens.fraction_stopped,
             "fraction_blowup_proxy": ens.fraction_blowup_proxy}, files, t0)
    if any(p.status == HALT_SOLVER for p in ens.paths):
        return EXIT_SOLVER
    if any(p.status in ("stopped_norm", HALT_REGION) for p in ens.paths):
        return EXIT_HALT
    return EXIT_OK


def cmd_convergence(rc: RunConfig) -> int:
    t0 = time.time()
    if rc.stepper is None:
        raise ConfigurationError("convergence needs a stepper block")
    ex = rc.extras.get("convergence", {})
    kind = str(ex.get("kind", "exact_single_mode"))
    dts = [float(x) for x in ex.get("dts", [1 / 40, 1 / 80, 1 / 160])]
    T = float(ex.get("t_final", rc.stepper_t_final or 1.0))
    amp = float(ex.get("amplitude", 1.0))
    freq = int(ex.get("frequency", 1))
    axis = int(ex.get("axis", 0))
    if kind == "exact_single_mode":
        if rc.problem.name not in ("heat", "biharmonic"):
            raise ConfigurationError(
                "exact_single_mode oracle applies to the jet-affine problems "
                "(heat, biharmonic); use kind=manufactured otherwise")
        rate = (freq * rc.grid.lattice_unit) ** rc.problem.m
        u0 = single_mode_field(rc.grid, amp, freq, axis)
        exact = single_mode_field(rc.grid, amp * math.exp(-rate * T), freq, axis)
        forcing = None
    elif kind == "manufactured":
        ms = ManufacturedSolution(rc.problem, rc.grid, amplitude=amp,
                                  frequency=freq, axis=axis,
                                  rate=float(ex.get("rate", 1.0)))
        u0, exact, forcing = ms.u0(), ms.exact(T), ms.forcing
    else:
        raise ConfigurationError(f"unknown convergence kind {kind!r}")
    res = convergence_study(rc.problem, rc.bank, rc.stepper, u0, T, dts, exact,
                            forcing=forcing)
    rows = [(dt, err, res["slope"]) for dt, err in zip(res["dts"], res["errors"])]
    files = [write_csv(rc.output_dir / "convergence.csv",
                       ["dt", "error", "fitted_slope"], rows)]
    cfg_f = replace(rc.stepper, dt=min(dts))
    traj = solve(rc.problem, u0, T, rc.bank, cfg_f, forcing=forcing,
                 snapshot_stride=10**9)
    files.append(write_field(rc.output_dir / "fields/final.pfld", traj.final_state))
    files.append(write_field(rc.output_dir / "fields/exact.pfld", exact))
    _finish(rc, "convergence", {"slope": res["slope"]}, files, t0)
    return EXIT_OK


_COMMANDS = {
    "decompose": (cmd_decompose, False),
    "check-ellipticity": (cmd_check_ellipticity, False),
    "probe-sector": (cmd_probe_sector, False),
    "solve": (cmd_solve, False),
    "solve-sde": (cmd_solve_sde, True),
    "convergence": (cmd_convergence, False),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="parapde",
        description="Spectral paradifferential solver for fully nonlinear "
                    "parabolic (S)PDEs on periodic grids.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--output", default=None,
                       help="override the configured output directory")
    args = parser.parse_args(argv)

    runner, stochastic = _COMMANDS[args.command]
    try:
        rc = load_config(args.config)
        if args.output is not None:
            rc.output_dir = Path(args.output)
        rc.output_dir.mkdir(parents=True, exist_ok=True)
        violations = validate_run(rc, stochastic=stochastic)
        if violations:
            for v in violations:
                print(f"hypothesis violation - {v}", file=sys.stderr)
            return EXIT_HYPOTHESIS
        return runner(rc)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (RegionExitError,) as exc:
        print(f"runtime halt: {exc}", file=sys.stderr)
        return EXIT_HALT
    except (SolverFailureError,) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ParapdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

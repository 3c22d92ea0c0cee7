"""Command-line surface for the laboratory.

Subcommands
  bounds     dimension-bound curves: CSV plus a dependency-free SVG
  optimize   exponent optimization at one alpha, with witness and margins
  extend     wall-normal extension profile and constant table
  simulate   spectral solver run, snapshot files, energy ledger
  quantify   local scale-invariant quantities over stored snapshots
  dimension  parabolic box-counting estimate for a point-set CSV
  report     bundle of the above with PNG figures next to the CSV output

Exit codes: 0 success; 2 rejected input, tagged ``error[domain]`` on
stderr; 3 broken internal invariant, tagged ``error[invariant]``.
Worker counts inside the engines respect the FRACREG_THREADS variable.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .boxdim import counting_to_csv, dimension_fit, point_set, point_set_from_csv
from .bounds import (
    bound_curve,
    default_alpha_grid,
    eval_J,
    eval_L,
    optimize_gamma,
)
from .config import RunConfig, initial_state, load_config
from .errors import (
    CylinderOutOfWindow,
    DomainInputError,
    FracregError,
    InvariantViolation,
    RadiusUnresolved,
)
from .extension import solve_profile, profile_to_csv, constants_to_csv
from .figures import bounds_png, bounds_svg, covering_png, energy_png
from .ioutil import atomic_write_text, fmt12, write_csv
from .quantities import (
    ExtensionProvider,
    interpolation_ratio,
    parallel_reports,
    pressure_decay_ratio,
    quantities_to_csv,
    sweep_to_csv,
)
from .snapshots import (
    load_trajectory,
    save_snapshot,
    save_trajectory,
    snapshot_of,
)
from .solver import global_energy_report, pressure_from, simulate

# The alpha -> 1 closure row: both bounds and their gap have exact
# rational limits, so the curve files carry them as a fixed probe row.
_CLOSURE_ROW = (1.0, 5.0 / 3.0, 360.0 / 277.0, 305.0 / 831.0)


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# bounds


def _bounds_rows(n: int):
    if n < 2:
        raise DomainInputError("need at least two alpha samples")
    if n == 999:
        grid = default_alpha_grid()
    else:
        grid = np.linspace(1.00025, 1.24975, n)
    curve = bound_curve(grid)
    return [_CLOSURE_ROW] + list(curve.rows())


def _write_bounds(outdir: str, n: int, with_png: bool = False):
    rows = _bounds_rows(n)
    csv_path = os.path.join(outdir, "bounds.csv")
    write_csv(csv_path, "alpha,L,J,gamma_star", rows)
    alphas = [r[0] for r in rows]
    l_vals = [r[1] for r in rows]
    j_vals = [r[2] for r in rows]
    svg_path = os.path.join(outdir, "bounds.svg")
    bounds_svg(alphas, l_vals, j_vals, svg_path)
    written = [csv_path, svg_path]
    if with_png:
        png_path = os.path.join(outdir, "bounds.png")
        bounds_png(alphas, l_vals, j_vals, png_path)
        written.append(png_path)
    return rows, written


def cmd_bounds(args) -> int:
    outdir = _ensure_dir(args.out)
    rows, written = _write_bounds(outdir, args.n)
    print(f"rows = {len(rows)}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# optimize


def _optimize_lines(alpha: float, zeta_schedule=None):
    kwargs = {}
    if zeta_schedule:
        kwargs["zeta_schedule"] = tuple(zeta_schedule)
    result = optimize_gamma(alpha, **kwargs)
    w = result.witness
    lines = [
        f"alpha = {fmt12(alpha)}",
        f"gamma_star = {fmt12(result.gamma_star)}",
        f"gap_L_minus_J = {fmt12(eval_L(alpha) - eval_J(alpha))}",
        (f"witness: eta={fmt12(w.eta)} zeta={fmt12(w.zeta)} "
         f"N={w.n_steps} gamma={fmt12(w.gamma)}"),
    ]
    for i, m in enumerate(w.margins.margins, start=1):
        lines.append(f"margin_{i} = {fmt12(m)}")
    lines.append(f"zeta_admissible = {w.admissible_zeta}")
    return lines


def cmd_optimize(args) -> int:
    schedule = None
    if args.zeta:
        schedule = [float(z) for z in args.zeta.split(",") if z.strip()]
    lines = _optimize_lines(args.alpha, schedule)
    for line in lines:
        print(line)
    if args.out:
        outdir = _ensure_dir(args.out)
        path = os.path.join(outdir, "optimize.txt")
        atomic_write_text(path, "\n".join(lines) + "\n")
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# extend


def cmd_extend(args) -> int:
    outdir = _ensure_dir(args.out)
    profile = solve_profile(args.alpha)
    profile_path = os.path.join(outdir, "profile.csv")
    profile_to_csv(profile, profile_path, n_samples=args.n_samples)
    if args.alphas:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    else:
        alphas = [args.alpha]
    const_path = os.path.join(outdir, "constants.csv")
    constants_to_csv(alphas, const_path)
    c_alpha = getattr(profile, "c_alpha", None)
    if c_alpha is not None:
        print(f"c_alpha = {fmt12(c_alpha)}")
    print(f"wrote {profile_path}")
    print(f"wrote {const_path}")
    return 0


# --------------------------------------------------------------------------
# simulate


def _config_from(args) -> RunConfig:
    keys = ("alpha", "n_grid", "dt", "t_end", "init", "seed", "amplitude",
            "n_snapshots", "epsilon_0", "epsilon", "gamma", "radii",
            "centers")
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return load_config(getattr(args, "config", None), overrides)


def _run_simulation(cfg: RunConfig, outdir: str):
    state = initial_state(cfg)
    if cfg.t_end == 0.0:
        path = os.path.join(_ensure_dir(outdir), "snap_0000.fnse")
        save_snapshot(snapshot_of(state, pressure_from(state)), path)
        return None, [path]
    traj = simulate(state, dt=cfg.dt, t_end=cfg.t_end,
                    n_snapshots=cfg.n_snapshots)
    paths = save_trajectory(traj, outdir)
    return traj, paths


def _write_energy(traj, outdir: str, with_png: bool = False):
    report = global_energy_report(traj)
    rows = []
    for i, (t, e) in enumerate(zip(report.times, report.energies)):
        resid = report.residuals[i - 1] if i else 0.0
        rows.append((t, e, resid))
    csv_path = os.path.join(outdir, "energy.csv")
    write_csv(csv_path, "time,energy,interval_residual", rows)
    written = [csv_path]
    if with_png:
        png_path = os.path.join(outdir, "energy.png")
        energy_png(report.times, report.energies, png_path)
        written.append(png_path)
    return report, written


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    outdir = cfg.output_dir
    traj, paths = _run_simulation(cfg, outdir)
    print(f"snapshots = {len(paths)}")
    if traj is None:
        print("t_end = 0: initial snapshot only")
        return 0
    report, written = _write_energy(traj, outdir)
    print(f"energy_initial = {fmt12(report.energies[0])}")
    print(f"energy_final = {fmt12(report.energies[-1])}")
    print(f"energy_residual_worst = {fmt12(report.worst)}")
    print(f"suitable_grade = {report.suitable_grade}")
    print(f"dissipation_route = {report.dissipation_route}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# quantify


def _eligible_time(traj, r: float) -> float:
    depth = r ** (2.0 * traj.alpha)
    t0 = traj.times[0]
    slack = 1e-9 * max(1.0, abs(float(traj.times[-1])))
    eligible = [float(tc) for tc in traj.times if tc - depth >= t0 - slack]
    if not eligible:
        raise CylinderOutOfWindow(
            f"radius {r:g} needs a window of depth {depth:g}; "
            f"the run spans {traj.times[-1] - t0:g}")
    return eligible[-1]


def _quantify(traj, radii, centers: int, outdir: str):
    provider = ExtensionProvider(traj)
    box = traj.box_length
    h = box / centers
    lattice = [((i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h)
               for i in range(centers)
               for j in range(centers)
               for k in range(centers)]
    jobs = []
    for r in radii:
        tc = _eligible_time(traj, r)
        jobs.extend([((c, tc), r) for c in lattice])
    reports = parallel_reports(traj, provider, jobs)
    q_path = os.path.join(outdir, "quantities.csv")
    quantities_to_csv(reports, q_path)
    written = [q_path]

    # lemma-ratio sweeps at the lattice center nearest the box middle
    rho = radii[0]
    tc = _eligible_time(traj, rho)
    mid = ((centers // 2) + 0.5) * h
    z = ((mid, mid, mid), tc)
    for name, fn in (("interp_sweep.csv", interpolation_ratio),
                     ("pdecay_sweep.csv", pressure_decay_ratio)):
        rows = []
        for r in (rho / 2.0, rho / 4.0):
            try:
                ratio = fn(traj, z, r, rho, provider)
                flag = "ok"
            except (RadiusUnresolved, CylinderOutOfWindow):
                ratio, flag = float("nan"), "unresolved"
            rows.append((r, rho, ratio, flag))
        path = os.path.join(outdir, name)
        sweep_to_csv(rows, path)
        written.append(path)
    return reports, written


def cmd_quantify(args) -> int:
    radii = tuple(float(r) for r in args.radii.split(",") if r.strip())
    if not radii or min(radii) <= 0.0:
        raise DomainInputError("radii must be positive")
    traj = load_trajectory(args.snapshots)
    outdir = _ensure_dir(args.out)
    reports, written = _quantify(traj, radii, args.centers, outdir)
    print(f"reports = {len(reports)}")
    print(f"eps_sum_max = {fmt12(max(r.epsilon_sum for r in reports))}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# dimension


def cmd_dimension(args) -> int:
    s = point_set_from_csv(args.points, args.alpha)
    fit = dimension_fit(s, args.r_min, args.r_max)
    print(f"points = {s.n_points}")
    print(f"dimension = {fmt12(fit.dimension)}")
    print(f"residual = {fmt12(fit.residual)}")
    print(f"fit_window = [{fmt12(fit.fit_window[0])}, "
          f"{fmt12(fit.fit_window[1])}]")
    if args.out:
        outdir = _ensure_dir(args.out)
        path = os.path.join(outdir, "dimension.csv")
        counting_to_csv(fit, path)
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    cfg = _config_from(args)
    outdir = _ensure_dir(cfg.output_dir)
    written = []

    _, bounds_written = _write_bounds(outdir, args.n, with_png=True)
    written.extend(bounds_written)

    opt_lines = _optimize_lines(cfg.alpha)
    opt_path = os.path.join(outdir, "optimize.txt")
    atomic_write_text(opt_path, "\n".join(opt_lines) + "\n")
    written.append(opt_path)

    snap_dir = os.path.join(outdir, "snapshots")
    traj, snap_paths = _run_simulation(cfg, snap_dir)
    written.extend(snap_paths)
    if traj is not None:
        report, energy_written = _write_energy(traj, outdir, with_png=True)
        written.extend(energy_written)
        _, quant_written = _quantify(traj, cfg.radii, cfg.centers, outdir)
        written.extend(quant_written)

    # dimension demo on the classical slope-1/2 sequence set
    vals = np.concatenate([[0.0], 1.0 / np.arange(1, 20001)])
    seq = point_set(np.stack([vals, np.zeros_like(vals)], axis=1), cfg.alpha)
    fit = dimension_fit(seq, 2.0 ** (-12), 2.0 ** (-3))
    dim_path = os.path.join(outdir, "dimension.csv")
    counting_to_csv(fit, dim_path)
    written.append(dim_path)
    cov_path = os.path.join(outdir, "covering.png")
    covering_png(fit.radii, fit.counts, fit.dimension, cov_path)
    written.append(cov_path)

    print(f"sequence_dimension = {fmt12(fit.dimension)}")
    print(f"artifacts = {len(written)}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# wiring


def _add_config_flags(sub):
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument("--alpha", type=float, help="dissipation exponent")
    sub.add_argument("--n-grid", dest="n_grid", type=int)
    sub.add_argument("--dt", type=float)
    sub.add_argument("--t-end", dest="t_end", type=float)
    sub.add_argument("--init", help="taylor_green | random_bandlimited")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--amplitude", type=float)
    sub.add_argument("--n-snapshots", dest="n_snapshots", type=int)
    sub.add_argument("--epsilon-0", dest="epsilon_0", type=float)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--radii", help="comma-separated decreasing radii")
    sub.add_argument("--centers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracreg",
        description="Desk-scale laboratory for hyperdissipative "
                    "Navier-Stokes partial-regularity bounds.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("bounds", help="dimension-bound curves (CSV + SVG)")
    p.add_argument("--n", type=int, default=999,
                   help="alpha samples (default 999)")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_bounds)

    p = subs.add_parser("optimize", help="exponent optimization at one alpha")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--zeta", help="comma-separated zeta schedule")
    p.add_argument("--out", help="also write optimize.txt here")
    p.set_defaults(func=cmd_optimize)

    p = subs.add_parser("extend", help="extension profile and constant table")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--alphas", help="comma list for the constant table")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=400)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_extend)

    p = subs.add_parser("simulate", help="run the solver, write snapshots")
    _add_config_flags(p)
    p.add_argument("--out", help="output directory (default from config)")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("quantify", help="local quantities on snapshots")
    p.add_argument("--snapshots", required=True,
                   help="directory of .fnse files")
    p.add_argument("--radii", default="0.9,0.45")
    p.add_argument("--centers", type=int, default=3)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_quantify)

    p = subs.add_parser("dimension", help="box-counting estimate for a CSV")
    p.add_argument("--points", required=True, help="point-set CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--r-min", dest="r_min", type=float, default=1e-4)
    p.add_argument("--r-max", dest="r_max", type=float, default=1.0)
    p.add_argument("--out", help="also write dimension.csv here")
    p.set_defaults(func=cmd_dimension)

    p = subs.add_parser("report", help="bundle curves, run, quantities, "
                                       "dimension demo with figures")
    _add_config_flags(p)
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--n", type=int, default=999,
                   help="alpha samples for the curve")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error[invariant]: {exc}", file=sys.stderr)
        return 3
    except DomainInputError as exc:
        print(f"error[domain]: {exc}", file=sys.stderr)
        return 2
    except FracregError as exc:
        print(f"error[domain]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # unexpected failure is a bug signal
        print(f"error[invariant]: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

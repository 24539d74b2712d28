"""Command-line interface.

Subcommands: sample, trace, green, boltzmann, converge, mass, plot.
Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
4 acceptance-check failure (``converge --check``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .billiard import PhasePoint, flow
from .boltzmann import (
    ParticleEnsemble,
    ScatterParams,
    deflection_density_check,
    evolve_jump,
)
from .greenfn import (
    decompose_J1_J2,
    default_observables,
    estimate_green,
    recollision_mass_gap,
    verify_integral_equation,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    sample_initial,
    run_convergence,
    run_mass_check,
)
from .poisson import sample_configuration
from .streams import block_generator
from . import report

DEFAULT_SEED = 20260810


def _vector(text: str) -> np.ndarray:
    try:
        return np.asarray([float(p) for p in text.split(",")], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorentzgas",
        description="Monte Carlo laboratory for a random Lorentz gas and its kinetic limit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 20260810)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: env LORENTZ_BG_THREADS or 1)")
    parser.add_argument("--out-dir", default=None, help="output directory (default: results)")
    parser.add_argument("--config", default=None, help="JSON experiment config (converge, mass)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="dump one obstacle configuration")
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--intensity", type=float, default=None,
                   help="points per unit volume (default: eps**(1-dim))")

    p = sub.add_parser("trace", help="one billiard trajectory as a collision CSV")
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--intensity", type=float, default=None)
    p.add_argument("--x", type=_vector, default=None, help="start position, e.g. 0,0")
    p.add_argument("--v", type=_vector, default=None, help="start direction, e.g. 1,0")
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=3.0, help="obstacle sampling ball radius")

    p = sub.add_parser("green", help="endpoint-law estimates and diagnostics")
    p.add_argument("--mode", choices=("estimate", "j1j2", "gap", "inteq"), default="estimate")
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=_vector, default=None)
    p.add_argument("--v", type=_vector, default=None)
    p.add_argument("--R", type=float, default=1.0, help="initial-support radius")
    p.add_argument("--T", type=float, default=1.0, help="time horizon")
    p.add_argument("--n", type=int, default=2000, help="outer sample count")
    p.add_argument("--n-inner", type=int, default=100, help="inner samples (inteq mode)")
    p.add_argument("--observable", default="one", help="observable name (inteq mode)")

    p = sub.add_parser("boltzmann", help="limiting jump process and kernel checks")
    p.add_argument("--mode", choices=("jump", "deflection"), default="jump")
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--t-grid", type=_floats, default=(0.25, 0.5, 1.0))

    p = sub.add_parser("converge", help="finite-eps vs limit convergence study")
    p.add_argument("--check", action="store_true",
                   help="assert per-observable gap criteria; exit 4 on failure")

    sub.add_parser("mass", help="total-mass conservation and deficiency study")

    p = sub.add_parser("plot", help="render SVG line charts from a result CSV")
    p.add_argument("--input", required=True, help="result CSV produced by converge/mass")

    return parser


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("LORENTZ_BG_THREADS")
    return max(1, int(env)) if env else 1


def _default_phase(dim: int, x, v) -> PhasePoint:
    if x is None:
        x = np.zeros(dim)
    if v is None:
        v = np.zeros(dim)
        v[0] = 1.0
    return PhasePoint(np.asarray(x, dtype=float), np.asarray(v, dtype=float))


def _cmd_sample(args, out_dir: str, seed: int, threads: int) -> int:
    intensity = args.intensity if args.intensity is not None else args.eps ** (1 - args.dim)
    rng = block_generator(seed, 1, 0)
    config = sample_configuration(args.dim, intensity, args.radius, rng)
    csv_path = os.path.join(out_dir, "sample_centers.csv")
    report.write_configuration_csv(config, csv_path)
    report.write_metadata(
        os.path.join(out_dir, "sample_meta.json"),
        {"dim": args.dim, "eps": args.eps, "intensity": intensity,
         "radius": args.radius, "seed": seed, "n_centers": config.n_centers},
    )
    print(f"wrote {config.n_centers} centers to {csv_path}")
    return 0


def _cmd_trace(args, out_dir: str, seed: int, threads: int) -> int:
    intensity = args.intensity if args.intensity is not None else args.eps ** (1 - args.dim)
    z = _default_phase(args.dim, args.x, args.v)
    rng = block_generator(seed, 2, 0)
    config = sample_configuration(args.dim, intensity, args.radius, rng)
    result = flow(z, args.time, config, args.eps)
    rows = report.trajectory_rows(z, result, config, args.eps)
    csv_path = os.path.join(out_dir, "trace.csv")
    report.write_trajectory_csv(rows, args.dim, csv_path)
    report.write_metadata(
        os.path.join(out_dir, "trace_meta.json"),
        {"dim": args.dim, "eps": args.eps, "intensity": intensity, "time": args.time,
         "seed": seed, "n_collisions": result.n_collisions,
         "endpoint_x": [float(c) for c in result.endpoint.x],
         "endpoint_v": [float(c) for c in result.endpoint.v]},
    )
    print(f"wrote {result.n_collisions} collision rows to {csv_path}")
    return 0


def _cmd_green(args, out_dir: str, seed: int, threads: int) -> int:
    z = _default_phase(args.dim, args.x, args.v)
    records = []
    if args.mode == "estimate":
        measure = estimate_green(args.t, z, args.eps, args.R, args.T, args.n, seed, threads)
        for obs in default_observables(args.dim):
            est, se = measure.pair(obs)
            records.append({"eps": args.eps, "t": args.t, "observable": obs.name,
                            "estimate": est, "stderr": se, "n_samples": args.n, "seed": seed})
        records.append({"eps": args.eps, "t": args.t, "observable": "mass",
                        "estimate": measure.mass, "stderr": 0.0,
                        "n_samples": args.n, "seed": seed})
    elif args.mode == "j1j2":
        res = decompose_J1_J2(args.t, z, args.eps, args.R, args.T, args.n, seed, threads)
        records.append({"eps": args.eps, "t": args.t, "observable": "J1_mass",
                        "estimate": res.j1_mass, "stderr": res.j1_stderr,
                        "n_samples": args.n, "seed": seed})
        records.append({"eps": args.eps, "t": args.t, "observable": "J2_mass",
                        "estimate": res.j2_mass, "stderr": res.j2_stderr,
                        "n_samples": args.n, "seed": seed})
    elif args.mode == "gap":
        gap, se = recollision_mass_gap(args.t, z, args.eps, args.R, args.T, args.n, seed, threads)
        records.append({"eps": args.eps, "t": args.t, "observable": "recollision_gap",
                        "estimate": gap, "stderr": se, "n_samples": args.n, "seed": seed})
    else:
        names = {o.name: o for o in default_observables(args.dim)}
        if args.observable not in names:
            raise ConfigError(f"observable: unknown name {args.observable!r}; "
                              f"choose from {sorted(names)}")
        res = verify_integral_equation(
            args.t, z, args.eps, args.R, args.T, names[args.observable],
            args.n, args.n_inner, seed, threads,
        )
        for label, value, se in (("inteq_lhs", res.lhs, 0.0), ("inteq_rhs", res.rhs, 0.0),
                                 ("inteq_residual", res.residual, res.stderr)):
            records.append({"eps": args.eps, "t": args.t, "observable": label,
                            "estimate": value, "stderr": se,
                            "n_samples": args.n, "seed": seed})

    csv_path = os.path.join(out_dir, "green_results.csv")
    report.write_green_csv(records, csv_path)
    report.write_metadata(
        os.path.join(out_dir, "green_meta.json"),
        {"mode": args.mode, "dim": args.dim, "eps": args.eps, "t": args.t,
         "R": args.R, "T": args.T, "n": args.n, "n_inner": args.n_inner,
         "seed": seed, "z_x": [float(c) for c in z.x], "z_v": [float(c) for c in z.v]},
    )
    print(f"wrote {len(records)} rows to {csv_path}")
    return 0


def _cmd_boltzmann(args, out_dir: str, seed: int, threads: int) -> int:
    if args.mode == "deflection":
        check = deflection_density_check(args.dim, args.n, seed)
        hist_path = os.path.join(out_dir, "deflection_hist.csv")
        with open(hist_path, "w") as fh:
            fh.write("bin_lo,bin_hi,count\n")
            for lo, hi, c in zip(check.bin_edges[:-1], check.bin_edges[1:], check.counts):
                fh.write(f"{lo!r},{hi!r},{int(c)}\n")
        report.write_metadata(
            os.path.join(out_dir, "deflection_stats.json"),
            {"dim": args.dim, "n": args.n, "seed": seed,
             "statistic": check.statistic, "pvalue": check.pvalue,
             "symmetry_pvalue": check.symmetry_pvalue,
             "frac_small_angle": check.frac_small_angle},
        )
        print(f"deflection check: statistic={check.statistic:.3f} pvalue={check.pvalue:.4f}")
        return 0

    params = ScatterParams.for_dim(args.dim)
    rng = block_generator(seed, 3, 0)
    x, v = sample_initial({"kind": "radial_bump", "radius": 1.0}, args.dim, args.n, rng)
    ens = ParticleEnsemble(x, v, 0.0)
    observables = default_observables(args.dim)
    snap_path = os.path.join(out_dir, "boltzmann_snapshots.csv")
    series_path = os.path.join(out_dir, "boltzmann_series.csv")
    with open(snap_path, "w") as snap, open(series_path, "w") as series:
        snap.write("t," + ",".join([f"x{i+1}" for i in range(args.dim)]
                                   + [f"v{i+1}" for i in range(args.dim)]) + "\n")
        series.write("t,observable,estimate,stderr\n")
        prev = 0.0
        for t in sorted(set(args.t_grid)):
            ens = evolve_jump(ens, t - prev, params, rng)
            prev = t
            for row in np.hstack([ens.positions, ens.velocities]):
                snap.write(f"{t!r}," + ",".join(repr(float(c)) for c in row) + "\n")
            for obs in observables:
                y = obs(ens.positions, ens.velocities)
                se = float(np.std(y, ddof=1)) / np.sqrt(args.n) if args.n > 1 else 0.0
                series.write(f"{t!r},{obs.name},{float(y.mean())!r},{se!r}\n")
    report.write_metadata(
        os.path.join(out_dir, "boltzmann_meta.json"),
        {"dim": args.dim, "n": args.n, "t_grid": list(args.t_grid),
         "sigma": params.sigma, "seed": seed},
    )
    print(f"wrote snapshots to {snap_path} and series to {series_path}")
    return 0


def _load_config(args, seed: int) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _cmd_converge(args, out_dir: str, seed: int, threads: int) -> int:
    config = _load_config(args, seed)
    rows = run_convergence(config, threads)
    csv_path = os.path.join(out_dir, "convergence_results.csv")
    report.write_rows_csv(rows, csv_path)
    report.write_metadata(os.path.join(out_dir, "convergence_meta.json"),
                          {"experiment": "convergence", **config.to_dict(), "threads": threads})
    report.render_gap_figure(rows, os.path.join(out_dir, "gaps_vs_eps.svg"))
    print(f"wrote {len(rows)} rows to {csv_path}")

    if not args.check:
        return 0
    eps_min = min(config.eps_list)
    eps_max = max(config.eps_list)
    failures = 0
    print(f"{'t':>6} {'observable':>16} {'gap(min eps)':>13} {'3*SE':>10} "
          f"{'trend ok':>8} {'status':>7}")
    gap_rows = [r for r in rows if r.estimator == "gap"]
    for t in sorted(set(config.t_eval)):
        for name in sorted({r.observable for r in gap_rows}):
            small = next(r for r in gap_rows if r.eps == eps_min and r.t == t
                         and r.observable == name)
            large = next(r for r in gap_rows if r.eps == eps_max and r.t == t
                         and r.observable == name)
            tol = 3.0 * small.stderr
            trend_ok = small.estimate <= large.estimate + 3.0 * np.hypot(small.stderr, large.stderr)
            ok = small.estimate <= tol and trend_ok
            failures += 0 if ok else 1
            print(f"{t:>6g} {name:>16} {small.estimate:>13.5f} {tol:>10.5f} "
                  f"{str(trend_ok):>8} {'PASS' if ok else 'FAIL':>7}")
    return 0 if failures == 0 else 4


def _cmd_mass(args, out_dir: str, seed: int, threads: int) -> int:
    config = _load_config(args, seed)
    rows = run_mass_check(config, threads)
    csv_path = os.path.join(out_dir, "mass_results.csv")
    report.write_rows_csv(rows, csv_path)
    report.write_metadata(os.path.join(out_dir, "mass_meta.json"),
                          {"experiment": "mass", **config.to_dict(), "threads": threads})
    report.render_mass_figure(rows, os.path.join(out_dir, "mass_deficiency.svg"))
    print(f"wrote {len(rows)} rows to {csv_path}")
    return 0


def _cmd_plot(args, out_dir: str, seed: int, threads: int) -> int:
    rows = report.read_rows_csv(args.input)
    written = report.render_result_lines(rows, out_dir)
    print(f"wrote {len(written)} figure(s) to {out_dir}")
    return 0


_COMMANDS = {
    "sample": _cmd_sample,
    "trace": _cmd_trace,
    "green": _cmd_green,
    "boltzmann": _cmd_boltzmann,
    "converge": _cmd_converge,
    "mass": _cmd_mass,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version.
        return int(exc.code or 0)

    seed = args.seed if args.seed is not None else DEFAULT_SEED
    threads = _resolve_threads(args)
    out_dir = args.out_dir or "results"
    try:
        os.makedirs(out_dir, exist_ok=True)
        return _COMMANDS[args.command](args, out_dir, seed, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``passopt <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (ExperimentSpec, aggregate, bootstrap_ci, columns_for, heatmap_experiment,
                          paired_differences, run_experiment, write_csv, write_svg)
from .scenario import SCHEMES, ConfigError, SystemConfig

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2

SWEEP_PARAMS = {"power": "sweep_power", "frequency": "sweep_frequency", "tandelta": "sweep_tandelta"}
SWEEP_DEFAULTS = {
    "power": (10.0, 15.0, 20.0, 25.0, 30.0),
    "frequency": (6e9, 16e9, 28e9),
    "tandelta": (1e-5, 1e-4, 1e-3, 2e-3, 5e-3, 1e-2),
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (P and sigma2 in dBm)")
    p.add_argument("--out", help="output path (.csv, or .svg with --format svg)")
    p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials (default: config mc_trials)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: config rng_seed)")
    p.add_argument("--scheme", choices=SCHEMES, default=None, help="override the hardware model")
    p.add_argument("--format", choices=("csv", "svg"), default="csv")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="passopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="optimise trials at the configured operating point"))
    p = sub.add_parser("sweep", help="sweep power, frequency or loss tangent")
    _common(p)
    p.add_argument("--param", choices=tuple(SWEEP_PARAMS), default="power")
    p.add_argument("--values", type=float, nargs="+", help="grid values (dBm, Hz or tan delta)")
    p.add_argument("--schemes", nargs="+", choices=SCHEMES, help="schemes to compare")
    _common(sub.add_parser("baselines", help="HUS vs random pairing and proposed vs MRT"))
    p = sub.add_parser("heatmap", help="energy map of one slot")
    _common(p)
    p.add_argument("--slot", type=int, default=1, help="1-based slot index")
    p.add_argument("--nx", type=int, default=200)
    p.add_argument("--ny", type=int, default=600)
    p.add_argument("--coherent", action="store_true", help="add waveguides in amplitude")
    _common(sub.add_parser("convergence", help="outer AO traces"))
    return parser


def load_config(args) -> SystemConfig:
    cfg = SystemConfig.from_json(args.config) if args.config else SystemConfig()
    if args.scheme:
        cfg = cfg.with_(scheme=args.scheme)
    return cfg


def _emit(rows: list[dict], kind: str, args, default_name: str) -> Path:
    out = Path(args.out or default_name)
    if args.format == "svg":
        write_csv(rows, out.with_suffix(".csv"), columns_for(kind))
        return write_svg(rows, kind, out.with_suffix(".svg"))
    return write_csv(rows, out, columns_for(kind))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        trials = cfg.mc_trials if args.trials is None else args.trials
        seed = cfg.rng_seed if args.seed is None else args.seed
        if trials < 1:
            raise ConfigError("--trials must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    cmd = args.command
    if cmd == "heatmap":
        if not 1 <= args.slot <= cfg.T:
            print(f"error: --slot must be in 1..{cfg.T}", file=sys.stderr)
            return EXIT_CONFIG
        grid, rep, core = heatmap_experiment(cfg, seed, args.slot - 1, args.nx, args.ny, args.coherent)
        path = _emit(grid.rows(), "heatmap", args, "heatmap.csv")
        print(f"slot {args.slot}: core user {core + 1}, sum rate {rep.sum_rate:.3f} bps/Hz -> {path}")
        if grid.zero_power:
            print("warning: zero radiated power, map not normalised", file=sys.stderr)
        return EXIT_OK if rep.feasible else EXIT_INFEASIBLE

    if cmd == "run":
        kind, grid, schemes = "sweep_power", (cfg.P_dbm,), (cfg.scheme,)
    elif cmd == "sweep":
        kind = SWEEP_PARAMS[args.param]
        grid = tuple(args.values or SWEEP_DEFAULTS[args.param])
        schemes = tuple(args.schemes or (cfg.scheme,))
    elif cmd == "baselines":
        kind, grid, schemes = "baseline_compare", (), (cfg.scheme,)
    else:
        kind, grid, schemes = "convergence", (), (cfg.scheme,)
    spec = ExperimentSpec(kind, grid, schemes, trials, seed, None, cfg, args.workers)
    rows = run_experiment(spec)
    path = _emit(rows, kind, args, f"{cmd}.csv")
    _summarise(rows, kind)
    print(f"wrote {path}")
    if kind == "convergence":
        return EXIT_OK
    return EXIT_OK if any(r["feasible"] for r in rows) else EXIT_INFEASIBLE


def _summarise(rows: list[dict], kind: str) -> None:
    if kind == "baseline_compare":
        for a, b in ((("hus", "proposed"), ("rp", "proposed")), (("hus", "proposed"), ("hus", "mrt"))):
            d = paired_differences(rows, a, b)
            lo, hi = bootstrap_ci(d) if d.size > 1 else (d.mean(), d.mean())
            print(f"{'+'.join(a)} - {'+'.join(b)}: {d.mean():+.3f} bps/Hz  95% CI [{lo:+.3f}, {hi:+.3f}]")
    elif kind.startswith("sweep"):
        xkey = {"sweep_power": "power_dbm", "sweep_frequency": "freq_hz", "sweep_tandelta": "tandelta"}[kind]
        for a in aggregate(rows, ("scheme", xkey)):
            print(f"{a['scheme']:>4} {xkey}={a[xkey]:<10g} mean {a['mean']:.3f} std {a['std']:.3f} (n={a['n']})")
    elif kind == "convergence":
        for a in aggregate(rows, ("iter",)):
            print(f"iter {a['iter']:>2}: mean {a['mean']:.3f} (n={a['n']})")


if __name__ == "__main__":
    sys.exit(main())

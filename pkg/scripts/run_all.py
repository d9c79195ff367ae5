"""Regenerate every result table (and quick-look SVGs) under results/.

    python scripts/run_all.py --trials 20 --workers 4
"""

import argparse
from pathlib import Path

from passopt.experiments import (ExperimentSpec, columns_for, heatmap_experiment, run_experiment, write_csv,
                                 write_svg)
from passopt.scenario import SystemConfig

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--svg", action="store_true", help="also write figures (needs matplotlib)")
    args = ap.parse_args()
    out = Path(args.out)
    cfg = SystemConfig.from_json(ROOT / "configs" / "default.json").with_(G=1000)
    single = SystemConfig.from_json(ROOT / "configs" / "single_waveguide.json")
    schemes = ("IWS", "DWS", "AWS")

    jobs = {
        "convergence": ExperimentSpec("convergence", (), ("AWS",), args.trials, 0, None, cfg, args.workers),
        "sweep_power": ExperimentSpec("sweep_power", (10, 15, 20, 25, 30), schemes, args.trials, 0, None, cfg,
                                      args.workers),
        "sweep_power_single": ExperimentSpec("sweep_power", (10, 15, 20, 25, 30), ("IWS", "DWS"), args.trials, 0,
                                             None, single, args.workers),
        "sweep_frequency": ExperimentSpec("sweep_frequency", (6e9, 16e9, 28e9), schemes, args.trials, 0, None, cfg,
                                          args.workers),
        "sweep_tandelta": ExperimentSpec("sweep_tandelta", (1e-5, 1e-4, 1e-3, 2e-3, 5e-3, 1e-2), ("DWS", "AWS"),
                                         args.trials, 0, None, cfg, args.workers),
        "init_robustness": ExperimentSpec("init_robustness", tuple(range(1, 7)), ("AWS",), args.trials, 0, None,
                                          cfg.with_(feed_restart=False), args.workers),
        "baseline_compare": ExperimentSpec("baseline_compare", (), ("AWS",), args.trials, 0, None, cfg,
                                           args.workers),
    }
    for name, spec in jobs.items():
        rows = run_experiment(spec)
        path = write_csv(rows, out / f"{name}.csv", columns_for(spec.kind))
        if args.svg:
            write_svg(rows, spec.kind, path.with_suffix(".svg"))
        print(f"{name}: {len(rows)} rows -> {path}")

    grid, rep, core = heatmap_experiment(cfg.with_(R_min=1.9, G=10_000), seed=0, slot=0)
    path = write_csv(grid.rows(), out / "heatmap.csv", columns_for("heatmap"))
    if args.svg:
        write_svg(grid.rows(), "heatmap", path.with_suffix(".svg"))
    print(f"heatmap: core user {core + 1} -> {path}")


if __name__ == "__main__":
    main()

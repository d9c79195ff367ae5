"""Compare the per-slot allocator with a brute-force grid on random two-waveguide instances."""

import argparse
import math

import numpy as np

from passopt.channel import layout_effective_channels, rates_from_effective, slot_signal_interference
from passopt.hardware import AntennaLayout, equal_split_lengths
from passopt.power import allocate_power, equal_power
from passopt.scenario import SystemConfig, generate_users
from passopt.scheduling import hierarchical_schedule


def grid_best(E, sched, cfg, n_split=200, n_phase=360):
    p = np.linspace(0, 1, n_split)[:, None]
    ph = np.linspace(0, 2 * np.pi, n_phase, endpoint=False)[None, :]
    w = math.sqrt(cfg.P) * np.stack(np.broadcast_arrays(np.sqrt(p) + 0j, np.sqrt(1 - p) * np.exp(1j * ph)), -1)
    a, b = slot_signal_interference(E[:, sched.served[0]], w.reshape(-1, 2), cfg.sigma2, cfg.interference_model)
    r = np.log2(1 + a / b)
    ok = r.min(axis=1) >= cfg.R_min
    return r.sum(axis=1)[ok].max() if ok.any() else float("nan")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--rmin", type=float, default=0.5)
    args = ap.parse_args()
    cfg = SystemConfig(K=2, M=2, R_min=args.rmin)
    L = np.tile(equal_split_lengths(cfg.chi, cfg.N), (2, 1))
    layout = AntennaLayout(np.tile(np.linspace(2.5, 7.5, cfg.N), (2, 1)), L, cfg.scheme, cfg.D)
    for seed in range(args.instances):
        users = generate_users(cfg, np.random.default_rng(seed))
        sched, _ = hierarchical_schedule(users, cfg)
        E = layout_effective_channels(users, layout, cfg)
        res = allocate_power(E, sched, cfg, equal_power(cfg))
        got = rates_from_effective(E, sched, res.power.w, cfg).sum()
        best = grid_best(E, sched, cfg)
        print(f"seed {seed:>2}: allocator {got:.4f}  grid {best:.4f}  ratio {got / best:.4f}  "
              f"feasible {bool(res.feasible.all())}")


if __name__ == "__main__":
    main()

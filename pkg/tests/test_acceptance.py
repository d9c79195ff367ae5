"""End-to-end acceptance criteria C1-C11.

Each test emits one ``Cn: PASS|FAIL`` line (collected in the terminal summary).
The Monte Carlo criteria take minutes; deselect them with ``-m "not slow"``.
"""

import math
import time
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from passopt.channel import layout_effective_channels, rates_from_effective, slot_signal_interference
from passopt.experiments import (ExperimentSpec, aggregate, bootstrap_ci, compare_baselines, heatmap_experiment,
                                 paired_differences, run_experiment, run_trial)
from passopt.hardware import PTFE, AntennaLayout, cascade_coupling, equal_split_lengths, propagation_constants
from passopt.orchestrator import initialize, run_full_pipeline
from passopt.placement import RateModel
from passopt.power import (allocate_power, equal_power, lagrangian_dual_transform, optimize_slot,
                           quadratic_transform, slot_problems)
from passopt.scenario import SystemConfig, generate_users
from passopt.scheduling import hierarchical_schedule, pair_waveguides, pairing_cost

from test_scheduling import all_pairings

slow = pytest.mark.slow
C0 = 299_792_458
ROOT = Path(__file__).resolve().parent.parent


def test_c1_em_constants(report):
    t0 = time.perf_counter()
    mp.mp.dps = 50
    worst = 0.0
    for f in (6e9, 16e9, 28e9):
        lam0 = mp.mpf(C0) / mp.mpf(f)
        root = mp.sqrt(mp.mpf("2.08"))
        alpha = mp.pi * root * mp.mpf("0.0004") / lam0
        beta = 2 * mp.pi * root / lam0
        const = propagation_constants(PTFE, f)
        worst = max(worst, abs(const.alpha_g / float(alpha) - 1), abs(const.beta_g / float(beta) - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 1.0
    report("C1", ok, f"max rel err {worst:.2e}", dt)
    assert ok


def test_c2_coupling(report):
    t0 = time.perf_counter()
    chi = 50.0
    eq_err = max(np.max(np.abs(cascade_coupling(equal_split_lengths(chi, N), chi) - 1 / math.sqrt(N)))
                 for N in range(1, 11))
    rng = np.random.default_rng(2)
    cons_err = 0.0
    for _ in range(1000):
        L = rng.uniform(0, 0.1, size=rng.integers(1, 13))
        xi = cascade_coupling(L, chi)
        cons_err = max(cons_err, abs(np.sum(xi ** 2) + np.prod(np.cos(chi * L) ** 2) - 1))
    dt = time.perf_counter() - t0
    ok = eq_err <= 1e-12 and cons_err <= 1e-12 and dt < 1.0
    report("C2", ok, f"equal-split err {eq_err:.1e}, conservation err {cons_err:.1e}", dt)
    assert ok


def test_c3_transform_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        a, b = 10 ** rng.uniform(-2, 2, size=2)
        T = int(rng.integers(1, 4))
        sinr = a / b
        nu = minimize_scalar(lambda v: -lagrangian_dual_transform(a, b, v, T), bounds=(0, 2 * sinr + 1),
                             method="bounded", options={"xatol": 1e-12})
        y = minimize_scalar(lambda v: -quadratic_transform(a, b, v), bounds=(0, 2 * math.sqrt(a) / (a + b) + 1),
                            method="bounded", options={"xatol": 1e-12})
        r_true, q_true = math.log2(1 + sinr) / T, a / (a + b)
        worst = max(worst, abs(-nu.fun - r_true) / r_true, abs(-y.fun - q_true) / q_true)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 5.0
    report("C3", ok, f"max rel err {worst:.1e} over 1000 pairs", dt)
    assert ok


def test_c4_pairing_optimality(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(K=6, M=3)
    pairings = list(all_pairings(6, 3, 2))
    mismatches = 0
    for seed in range(50):
        users = generate_users(cfg, np.random.default_rng(seed))
        best = min(pairing_cost(X, users, cfg) for X in pairings)
        got = pairing_cost(pair_waveguides(users, cfg), users, cfg)
        mismatches += not math.isclose(got, best, rel_tol=1e-12, abs_tol=1e-12)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 30.0
    report("C4", ok, f"{50 - mismatches}/50 match exhaustive optimum", dt)
    assert ok


def _grid_best(E, sched, cfg):
    p = np.linspace(0, 1, 200)[:, None]
    ph = np.linspace(0, 2 * np.pi, 360, endpoint=False)[None, :]
    w = math.sqrt(cfg.P) * np.stack(np.broadcast_arrays(np.sqrt(p) + 0j, np.sqrt(1 - p) * np.exp(1j * ph)), -1)
    a, b = slot_signal_interference(E[:, sched.served[0]], w.reshape(-1, 2), cfg.sigma2, cfg.interference_model)
    r = np.log2(1 + a / b) / cfg.T
    ok = r.min(axis=1) >= cfg.R_min
    return float(r.sum(axis=1)[ok].max()) if ok.any() else None


def test_c5_power_allocation_oracle(report):
    t0 = time.perf_counter()
    ratios = []
    for R_min in (0.0, 0.5):
        cfg = SystemConfig(K=2, M=2, R_min=R_min)
        for seed in range(20):
            users = generate_users(cfg, np.random.default_rng(seed))
            sched, _ = hierarchical_schedule(users, cfg)
            L = equal_split_lengths(cfg.chi, cfg.N)
            layout = AntennaLayout(np.tile(np.linspace(2.5, 7.5, cfg.N), (2, 1)), np.tile(L, (2, 1)),
                                   cfg.scheme, cfg.D)
            E = layout_effective_channels(users, layout, cfg)
            best = _grid_best(E, sched, cfg)
            if best is None:  # no grid point meets R_min: nothing to compare against
                continue
            res = allocate_power(E, sched, cfg, equal_power(cfg))
            r = rates_from_effective(E, sched, res.power.w, cfg)
            ratios.append(r.sum() / best if r.min() >= R_min - 1e-6 else 0.0)
    dt = time.perf_counter() - t0
    ok = len(ratios) >= 20 and min(ratios) >= 0.98 and dt < 120
    report("C5", ok, f"min ratio to grid optimum {min(ratios):.4f} over {len(ratios)} instances", dt)
    assert ok


@slow
def test_c6_monotone_sca_and_ao(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(G=1000)
    n = 100
    bad_slot = bad_power = bad_ao = converged = 0
    for s in range(n):
        user_rng, algo_rng = np.random.default_rng([s, 0]), np.random.default_rng([s, 1])
        users = generate_users(cfg, user_rng)
        sched, sel = hierarchical_schedule(users, cfg)
        bad_slot += any(after < before - 1e-9 for before, after in sel.trace)
        init = initialize(cfg, 1)
        E = RateModel(users, init.layout, sched, cfg).E
        for prob, w0 in zip(slot_problems(E, sched, cfg), init.power.w / math.sqrt(cfg.P)):
            res = optimize_slot(prob, w0, cfg.sca_power_max_iter)
            tr, fl = np.array(res.trace), np.array(res.trace_feasible)
            start = int(np.argmax(fl)) if fl.any() else 0  # ascent is on the feasible set once reached
            bad_power += bool(np.any(np.diff(tr[start:]) < -1e-9)) if fl.any() else 0
        rep = run_full_pipeline(cfg, algo_rng, users=users)
        bad_ao += not rep.trace.is_monotone(1e-9)
        converged += rep.trace.converged and rep.trace.iterations <= 10
    dt = time.perf_counter() - t0
    ok = bad_slot == 0 and bad_power == 0 and bad_ao == 0 and converged >= 0.95 * n and dt < 600
    report("C6", ok, f"non-monotone slot/power/AO traces {bad_slot}/{bad_power}/{bad_ao}, "
                     f"converged within 10 iters {converged}/{n}", dt)
    assert ok


@slow
def test_c7_scheme_ordering(report):
    t0 = time.perf_counter()
    base = SystemConfig.from_json(ROOT / "configs" / "single_waveguide.json").with_(feed_restart=False)
    powers = (10.0, 15.0, 20.0, 25.0, 30.0)
    gaps, ordered = {}, True
    for f in (28e9, 6e9):
        rows = run_experiment(ExperimentSpec("sweep_power", powers, ("IWS", "DWS"), 200, 0, None, base.with_(f=f)))
        mean = {(a["scheme"], a["power_dbm"]): a["mean"] for a in aggregate(rows, ("scheme", "power_dbm"))}
        ordered &= all(mean[("IWS", p)] >= mean[("DWS", p)] for p in powers)
        gaps[f] = float(np.mean([mean[("IWS", p)] - mean[("DWS", p)] for p in powers]))
    dt = time.perf_counter() - t0
    within = 0.5 <= gaps[28e9] / 1.08 <= 2 and 0.5 <= gaps[6e9] / 0.41 <= 2
    ok = ordered and gaps[28e9] > gaps[6e9] and within and dt < 600
    report("C7", ok, f"IWS>=DWS at all P: {ordered}; mean gap 28 GHz {gaps[28e9]:.3f} vs 6 GHz "
                     f"{gaps[6e9]:.3f} bps/Hz (ref 1.08 / 0.41)", dt)
    assert ok


@slow
def test_c8_loss_tangent_plateau(report):
    t0 = time.perf_counter()
    means, xs = [], []
    for td in (0.002, 0.005, 0.01):
        cfg = SystemConfig(G=1000, scheme="DWS", tan_delta=td)
        reps = [run_trial(cfg, 0, i) for i in range(20)]
        means.append(np.mean([r.sum_rate for r in reps]))
        xs.append(np.mean([r.layout.x.mean() for r in reps]))
    dt = time.perf_counter() - t0
    var = (max(means) - min(means)) / np.mean(means)
    ok = var < 0.05 and max(xs) < cfg.D / 10 and dt < 300
    report("C8", ok, f"sum-rate variation {100 * var:.2f}%, max mean PA x {max(xs):.3f} m", dt)
    assert ok


@slow
def test_c9_baseline_dominance(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(G=1000)
    arms = (("hus", "proposed"), ("rp", "proposed"), ("hus", "mrt"))
    rows = compare_baselines(ExperimentSpec("baseline_compare", (), ("AWS",), 100, 0, None, cfg), arms)
    d_sched = paired_differences(rows, arms[0], arms[1])
    d_power = paired_differences(rows, arms[0], arms[2])
    ci_s, ci_p = bootstrap_ci(d_sched), bootstrap_ci(d_power)
    dt = time.perf_counter() - t0
    ok = d_sched.mean() > 0 and ci_s[0] > 0 and d_power.mean() > 0 and ci_p[0] > 0 and dt < 900
    report("C9", ok, f"HUS-RP {d_sched.mean():+.3f} CI [{ci_s[0]:+.3f}, {ci_s[1]:+.3f}]; "
                     f"proposed-MRT {d_power.mean():+.3f} CI [{ci_p[0]:+.3f}, {ci_p[1]:+.3f}] bps/Hz", dt)
    assert ok


@slow
@pytest.mark.filterwarnings("ignore::passopt.placement.EmptySweepWarning")  # centre-packed starts
def test_c10_initialization_robustness(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(G=1000, feed_restart=False)
    rows = run_experiment(ExperimentSpec("init_robustness", tuple(range(1, 7)), ("AWS",), 50, 0, None, cfg))
    means = [a["mean"] for a in aggregate(rows, ("init_method",))]
    spread = (max(means) - min(means)) / np.mean(means)
    dt = time.perf_counter() - t0
    ok = spread < 0.10 and dt < 900
    report("C10", ok, f"relative spread {100 * spread:.2f}% ({', '.join(f'{m:.3f}' for m in means)})", dt)
    assert ok


@slow
def test_c11_heatmap_core_user(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(R_min=1.9)
    grid, rep, core = heatmap_experiment(cfg, seed=0, slot=0)
    pos = rep.users.positions
    energy = {int(k): grid.max_within(pos[k, :2], 1.0) for k in rep.schedule.served[0]}
    others = [v for k, v in energy.items() if k != core]
    dt = time.perf_counter() - t0
    ok = all(energy[core] > v for v in others) and dt < 120
    report("C11", ok, f"core user {core + 1}: {energy[core]:.3f} vs others "
                      f"{', '.join(f'{v:.3f}' for v in others)}", dt)
    assert ok

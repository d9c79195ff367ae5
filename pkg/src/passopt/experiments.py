"""Monte Carlo harness: sweeps, baselines, convergence traces and heat maps."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .channel import channel_from_distance, layout_effective_channels
from .hardware import config_propagation, coupling_amplitudes, pa_gain
from .orchestrator import RateReport, run_full_pipeline
from .scenario import SystemConfig, dbm_to_watt, generate_users, waveguide_ys

KINDS = ("convergence", "sweep_power", "sweep_frequency", "sweep_tandelta",
         "init_robustness", "baseline_compare", "heatmap")

SWEEP_COLUMNS = ("scheme", "freq_hz", "power_dbm", "tandelta", "trial", "sum_rate_bpshz",
                 "min_user_rate", "outer_iters", "feasible")
CONVERGENCE_COLUMNS = ("trial", "iter", "sum_rate_bpshz")
HEATMAP_COLUMNS = ("x_m", "y_m", "energy_norm")
INIT_COLUMNS = ("init_method", "trial", "sum_rate_bpshz", "min_user_rate", "outer_iters", "feasible")
BASELINE_COLUMNS = ("trial", "scheduler", "allocator", "sum_rate_bpshz", "min_user_rate",
                    "outer_iters", "feasible")


@dataclass
class ExperimentSpec:
    kind: str
    grid: tuple = ()
    schemes: tuple[str, ...] = ("AWS",)
    trials: int = 10
    seed: int = 0
    out: str | None = None
    cfg: SystemConfig = field(default_factory=SystemConfig)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.kind.startswith("sweep") and len(self.grid) == 0:
            raise ValueError("sweep needs a non-empty grid")
        self.grid = tuple(self.grid)
        self.schemes = tuple(self.schemes)


def trial_rngs(seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(user stream, algorithm stream) for one trial; users are shared by all arms."""
    return np.random.default_rng([seed, trial, 0]), np.random.default_rng([seed, trial, 1])


def run_trial(cfg: SystemConfig, seed: int, trial: int, scheduler: str = "hus",
              allocator: str = "proposed", init_method: int = 1) -> RateReport:
    user_rng, algo_rng = trial_rngs(seed, trial)
    users = generate_users(cfg, user_rng)
    return run_full_pipeline(cfg, algo_rng, scheduler, allocator, init_method, users=users)


def _sweep_row(cfg: SystemConfig, trial: int, rep: RateReport) -> dict[str, Any]:
    return {"scheme": cfg.scheme, "freq_hz": cfg.f, "power_dbm": round(cfg.P_dbm, 10),
            "tandelta": cfg.tan_delta, "trial": trial, "sum_rate_bpshz": rep.sum_rate,
            "min_user_rate": rep.min_rate, "outer_iters": rep.trace.iterations, "feasible": rep.feasible}


def _job(args):
    kind, cfg, seed, trial, extra = args
    if kind == "sweep":
        return [_sweep_row(cfg, trial, run_trial(cfg, seed, trial))]
    if kind == "init":
        rep = run_trial(cfg, seed, trial, init_method=extra)
        return [{"init_method": extra, "trial": trial, "sum_rate_bpshz": rep.sum_rate,
                 "min_user_rate": rep.min_rate, "outer_iters": rep.trace.iterations,
                 "feasible": rep.feasible}]
    if kind == "baseline":
        scheduler, allocator = extra
        rep = run_trial(cfg, seed, trial, scheduler, allocator)
        return [{"trial": trial, "scheduler": scheduler, "allocator": allocator,
                 "sum_rate_bpshz": rep.sum_rate, "min_user_rate": rep.min_rate,
                 "outer_iters": rep.trace.iterations, "feasible": rep.feasible}]
    if kind == "convergence":
        rep = run_trial(cfg, seed, trial)
        return [{"trial": trial, "iter": i, "sum_rate_bpshz": r} for i, r in enumerate(rep.trace.sum_rates)]
    raise ValueError(kind)


def _map(jobs: list, workers: int) -> list[dict]:
    """Run jobs, serially or in a process pool; rows come back in job order."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_job, jobs))
    else:
        chunks = [_job(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def sweep_config(cfg: SystemConfig, kind: str, value, scheme: str) -> SystemConfig:
    if kind == "sweep_power":
        return cfg.with_(P=dbm_to_watt(float(value)), scheme=scheme)
    if kind == "sweep_frequency":
        return cfg.with_(f=float(value), scheme=scheme)
    if kind == "sweep_tandelta":
        return cfg.with_(tan_delta=float(value), scheme=scheme)
    raise ValueError(kind)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Rows of the experiment's CSV schema, in (grid point, scheme, trial) order."""
    cfg, trials = spec.cfg, range(spec.trials)
    if spec.kind.startswith("sweep"):
        jobs = [("sweep", sweep_config(cfg, spec.kind, v, s), spec.seed, t, None)
                for v in spec.grid for s in spec.schemes for t in trials]
    elif spec.kind == "convergence":
        jobs = [("convergence", cfg.with_(scheme=s), spec.seed, t, None) for s in spec.schemes for t in trials]
    elif spec.kind == "init_robustness":
        methods = spec.grid or tuple(range(1, 7))
        jobs = [("init", cfg, spec.seed, t, int(m)) for m in methods for t in trials]
    elif spec.kind == "baseline_compare":
        return compare_baselines(spec)
    else:
        raise ValueError("heatmap experiments go through heatmap_experiment")
    rows = _map(jobs, spec.workers)
    if spec.out:
        write_csv(rows, spec.out, columns_for(spec.kind))
    return rows


ARMS = (("hus", "proposed"), ("rp", "proposed"), ("hus", "mrt"), ("rp", "mrt"))


def compare_baselines(spec: ExperimentSpec, arms: Sequence[tuple[str, str]] = ARMS) -> list[dict]:
    """Paired trials: every arm of a trial sees the same users and seed."""
    jobs = [("baseline", spec.cfg, spec.seed, t, arm) for t in range(spec.trials) for arm in arms]
    rows = _map(jobs, spec.workers)
    if spec.out:
        write_csv(rows, spec.out, BASELINE_COLUMNS)
    return rows


def paired_differences(rows: list[dict], arm_a: tuple[str, str], arm_b: tuple[str, str]) -> np.ndarray:
    by = {(r["trial"], r["scheduler"], r["allocator"]): r["sum_rate_bpshz"] for r in rows}
    trials = sorted({r["trial"] for r in rows})
    return np.array([by[(t, *arm_a)] - by[(t, *arm_b)] for t in trials])


def bootstrap_ci(values, level: float = 0.95, n_resamples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    values = np.asarray(values, dtype=float)
    res = stats.bootstrap((values,), np.mean, confidence_level=level, n_resamples=n_resamples,
                          method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def aggregate(rows: list[dict], keys: Sequence[str], value: str = "sum_rate_bpshz") -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals)
        out.append({**dict(zip(keys, key)), "mean": float(v.mean()),
                    "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "n": int(v.size)})
    return out


# ---------------------------------------------------------------- heat map

@dataclass
class HeatmapGrid:
    xs: np.ndarray
    ys: np.ndarray
    energy: np.ndarray  # (ny, nx), normalised so the max is 1
    zero_power: bool = False

    def rows(self) -> list[dict]:
        X, Y = np.meshgrid(self.xs, self.ys)
        return [{"x_m": float(x), "y_m": float(y), "energy_norm": float(e)}
                for x, y, e in zip(X.ravel(), Y.ravel(), self.energy.ravel())]

    def max_within(self, point, radius: float) -> float:
        X, Y = np.meshgrid(self.xs, self.ys)
        near = (X - point[0]) ** 2 + (Y - point[1]) ** 2 <= radius ** 2
        return float(self.energy[near].max()) if near.any() else 0.0


def heatmap(layout, w_slot: np.ndarray, cfg: SystemConfig, nx: int = 200, ny: int = 600,
            coherent: bool = False) -> HeatmapGrid:
    """Radiated energy over the user plane for one slot's coefficients.

    Waveguides add in power (independent streams) unless ``coherent``; the PAs
    of one waveguide always add in amplitude.
    """
    xs = np.linspace(0.0, cfg.d1, nx)
    ys = np.linspace(0.0, cfg.d2, ny)
    X, Y = np.meshgrid(xs, ys)
    g = pa_gain(layout.x, coupling_amplitudes(layout, cfg.chi), config_propagation(cfg), layout.scheme)
    wy = waveguide_ys(cfg)
    fields = []
    for m in range(layout.M):
        acc = np.zeros(X.shape, dtype=complex)
        for n in range(layout.N):
            d = np.sqrt((X - layout.x[m, n]) ** 2 + (Y - wy[m]) ** 2 + cfg.h ** 2)
            acc += channel_from_distance(d, cfg.f) * g[m, n]
        fields.append(acc * w_slot[m])
    fields = np.array(fields)
    energy = np.abs(fields.sum(axis=0)) ** 2 if coherent else np.sum(np.abs(fields) ** 2, axis=0)
    peak = energy.max()
    if peak <= 0:
        return HeatmapGrid(xs, ys, np.zeros_like(energy), zero_power=True)
    return HeatmapGrid(xs, ys, energy / peak)


def core_user(rep: RateReport, E: np.ndarray, slot: int) -> int:
    """Served user of the slot with the strongest own effective channel."""
    served = rep.schedule.served[slot]
    own = np.abs(E[np.arange(len(served)), served])
    return int(served[np.argmax(own)])


def heatmap_experiment(cfg: SystemConfig, seed: int = 0, slot: int = 0, nx: int = 200, ny: int = 600,
                       coherent: bool = False):
    """Optimise one trial and map the energy of ``slot`` (0-based)."""
    rep = run_trial(cfg, seed, 0)
    E = layout_effective_channels(rep.users, rep.layout, cfg)
    grid = heatmap(rep.layout, rep.power.w[slot], cfg, nx, ny, coherent)
    return grid, rep, core_user(rep, E, slot)


# ---------------------------------------------------------------- output

def columns_for(kind: str) -> tuple[str, ...]:
    if kind.startswith("sweep"):
        return SWEEP_COLUMNS
    return {"convergence": CONVERGENCE_COLUMNS, "heatmap": HEATMAP_COLUMNS,
            "init_robustness": INIT_COLUMNS, "baseline_compare": BASELINE_COLUMNS}[kind]


def write_csv(rows: list[dict], path, columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="raise")
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_svg(rows: list[dict], kind: str, path) -> Path:
    """Quick-look figure of a result table (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "heatmap":
        xs = sorted({r["x_m"] for r in rows})
        ys = sorted({r["y_m"] for r in rows})
        Z = np.array([r["energy_norm"] for r in rows]).reshape(len(ys), len(xs))
        im = ax.imshow(Z, origin="lower", extent=(xs[0], xs[-1], ys[0], ys[-1]), aspect="auto")
        fig.colorbar(im, ax=ax, label="normalised energy")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
    elif kind == "convergence":
        for t in sorted({r["trial"] for r in rows}):
            tr = [r for r in rows if r["trial"] == t]
            ax.plot([r["iter"] for r in tr], [r["sum_rate_bpshz"] for r in tr], alpha=0.5)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("sum rate (bps/Hz)")
    elif kind.startswith("sweep"):
        xkey = {"sweep_power": "power_dbm", "sweep_frequency": "freq_hz", "sweep_tandelta": "tandelta"}[kind]
        for row in _by_scheme(aggregate(rows, ("scheme", xkey)), xkey):
            ax.errorbar(row["x"], row["mean"], yerr=row["std"], label=row["scheme"], marker="o")
        if kind == "sweep_tandelta":
            ax.set_xscale("log")
        ax.set_xlabel(xkey)
        ax.set_ylabel("sum rate (bps/Hz)")
        ax.legend()
    else:
        key = "init_method" if kind == "init_robustness" else "arm"
        if kind == "baseline_compare":
            rows = [{**r, "arm": f"{r['scheduler']}+{r['allocator']}"} for r in rows]
        agg = aggregate(rows, (key,))
        ax.bar([str(a[key]) for a in agg], [a["mean"] for a in agg], yerr=[a["std"] for a in agg])
        ax.set_ylabel("sum rate (bps/Hz)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path



def _by_scheme(agg: list[dict], xkey: str) -> list[dict]:
    out = []
    for scheme in sorted({a["scheme"] for a in agg}):
        pts = sorted((a for a in agg if a["scheme"] == scheme), key=lambda a: a[xkey])
        out.append({"scheme": scheme, "x": [p[xkey] for p in pts], "mean": [p["mean"] for p in pts],
                    "std": [p["std"] for p in pts]})
    return out

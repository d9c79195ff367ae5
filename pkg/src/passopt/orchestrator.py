"""Alternating optimisation of PA positions and power, and the end-to-end pipeline."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import rates_from_effective
from .hardware import AntennaLayout, equal_split_lengths
from .placement import EmptySweepWarning, RateModel, optimize_positions
from .power import PowerAllocation, allocate_power, equal_power, mrt_baseline, random_power
from .scenario import SystemConfig, UserSet, generate_users
from .scheduling import Schedule, hierarchical_schedule, random_pairing

INIT_METHODS = {
    1: ("uniform", "equal"),
    2: ("center", "equal"),
    3: ("random", "equal"),
    4: ("uniform", "random"),
    5: ("center", "random"),
    6: ("random", "random"),
}
RATE_FEAS_TOL = 1e-6


@dataclass
class Initialization:
    layout: AntennaLayout
    power: PowerAllocation
    method: int = 1
    widened: bool = False  # middle-section placement did not fit and [L_1, D] was used


def _lengths(cfg: SystemConfig) -> np.ndarray:
    return np.tile(equal_split_lengths(cfg.chi, cfg.N), (cfg.M, 1))


def uniform_positions(cfg: SystemConfig) -> tuple[np.ndarray, bool]:
    L = _lengths(cfg)
    x = np.tile(np.linspace(cfg.D / 4, 3 * cfg.D / 4, cfg.N), (cfg.M, 1))
    if AntennaLayout(x, L, cfg.scheme, cfg.D).is_valid():
        return x, False
    # widen to [L_1, D]: first PA at L_1, last at D, slack shared equally between gaps
    slack = cfg.D - L[0].sum()
    if slack < 0:
        raise ValueError("couplers longer than the waveguide")
    share = np.arange(cfg.N) / max(cfg.N - 1, 1)
    return np.tile(np.cumsum(L[0]) + share * slack, (cfg.M, 1)), True


def center_positions(cfg: SystemConfig) -> np.ndarray:
    """PAs packed as tightly as the couplers allow, centred on D/2."""
    L = equal_split_lengths(cfg.chi, cfg.N)
    offsets = np.concatenate([[0.0], np.cumsum(L[1:])])
    x = cfg.D / 2 - offsets[-1] / 2 + offsets
    return np.tile(np.clip(x, L[0], cfg.D), (cfg.M, 1))


def feed_positions(cfg: SystemConfig) -> np.ndarray:
    """PAs packed against the feed: minimal spacing for AWS, all at L_1 otherwise."""
    L = equal_split_lengths(cfg.chi, cfg.N)
    x = np.cumsum(L) if cfg.scheme == "AWS" else np.full(cfg.N, L[0])
    return np.tile(np.minimum(x, cfg.D), (cfg.M, 1))


def random_positions(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the spacing-feasible set: sorted gaps plus cumulative lengths."""
    L = equal_split_lengths(cfg.chi, cfg.N)
    slack = cfg.D - L.sum()
    if slack < 0:
        raise ValueError("couplers longer than the waveguide")
    u = np.sort(rng.uniform(0.0, slack, size=(cfg.M, cfg.N)), axis=1)
    return u + np.cumsum(L)[None, :]


def initialize(cfg: SystemConfig, method: int = 1, rng: np.random.Generator | None = None) -> Initialization:
    """Starting layout and power for one of the six initialisation methods."""
    if method not in INIT_METHODS:
        raise ValueError(f"init method must be 1..6, got {method}")
    pos_kind, pow_kind = INIT_METHODS[method]
    if rng is None and (pos_kind == "random" or pow_kind == "random"):
        raise ValueError(f"method {method} needs an rng")
    widened = False
    if pos_kind == "uniform":
        x, widened = uniform_positions(cfg)
    elif pos_kind == "center":
        x = center_positions(cfg)
    else:
        x = random_positions(cfg, rng)
    layout = AntennaLayout(x, _lengths(cfg), cfg.scheme, cfg.D).validate()
    power = equal_power(cfg) if pow_kind == "equal" else random_power(cfg, rng)
    return Initialization(layout, power, method, widened)


@dataclass
class AOTrace:
    sum_rates: list[float] = field(default_factory=list)  # entry 0 is the initial point
    rates: list[np.ndarray] = field(default_factory=list)
    placement_feasible: list[bool] = field(default_factory=list)
    power_feasible: list[bool] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)  # seconds since start
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.sum_rates) - 1

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.sum_rates) >= -tol))


@dataclass
class AOResult:
    layout: AntennaLayout
    power: PowerAllocation
    trace: AOTrace
    E: np.ndarray


def run_ao(cfg: SystemConfig, users: UserSet, schedule: Schedule, init: Initialization,
           allocator: str = "proposed", tol: float | None = None, max_iter: int | None = None) -> AOResult:
    """Alternate position sweeps and power allocation until the sum rate settles."""
    if allocator not in ("proposed", "mrt"):
        raise ValueError(f"unknown allocator {allocator!r}")
    tol = cfg.ao_tol if tol is None else tol
    max_iter = cfg.ao_max_iter if max_iter is None else max_iter
    t0 = time.perf_counter()
    model = RateModel(users, init.layout, schedule, cfg)
    layout = init.layout
    power = mrt_baseline(model.E, schedule, cfg) if allocator == "mrt" else init.power
    trace = AOTrace()

    def record(w):
        r = rates_from_effective(model.E, schedule, w, cfg)
        trace.sum_rates.append(float(r.sum()))
        trace.rates.append(r)
        trace.wall_clock.append(time.perf_counter() - t0)

    record(power.w)
    for i in range(max_iter):
        placed = optimize_positions(layout, schedule, power.w, cfg, users, model)
        layout = placed.layout
        if allocator == "mrt":
            power = mrt_baseline(model.E, schedule, cfg)
            slot_ok = True
        else:
            alloc = allocate_power(model.E, schedule, cfg, power, restarts=(i == 0))
            power = alloc.power
            slot_ok = bool(np.all(alloc.feasible))
        trace.placement_feasible.append(placed.feasible)
        trace.power_feasible.append(slot_ok)
        record(power.w)
        if abs(trace.sum_rates[-1] - trace.sum_rates[-2]) <= tol:
            trace.converged = True
            break
    return AOResult(layout, power, trace, model.E.copy())


@dataclass
class RateReport:
    sum_rate: float
    rates: np.ndarray
    sinr: np.ndarray
    feasible: bool  # every user meets R_min
    trace: AOTrace
    schedule: Schedule
    layout: AntennaLayout
    power: PowerAllocation
    users: UserSet

    @property
    def min_rate(self) -> float:
        return float(self.rates.min())


def make_report(cfg: SystemConfig, users: UserSet, schedule: Schedule, res: AOResult) -> RateReport:
    rates = rates_from_effective(res.E, schedule, res.power.w, cfg)
    sinr = np.exp2(rates * cfg.T) - 1.0
    ok = bool(np.all(rates >= cfg.R_min - RATE_FEAS_TOL))
    return RateReport(float(rates.sum()), rates, sinr, ok, res.trace, schedule, res.layout, res.power, users)


def run_full_pipeline(cfg: SystemConfig, rng: np.random.Generator, scheduler: str = "hus",
                      allocator: str = "proposed", init_method: int = 1,
                      users: UserSet | None = None) -> RateReport:
    """Users, schedule, initialisation and AO for one trial."""
    users = generate_users(cfg, rng) if users is None else users
    if scheduler == "hus":
        schedule, _ = hierarchical_schedule(users, cfg)
    elif scheduler == "rp":
        schedule = random_pairing(users, cfg, rng)
    else:
        raise ValueError(f"unknown scheduler {scheduler!r}")
    init = initialize(cfg, init_method, rng)
    rep = make_report(cfg, users, schedule, run_ao(cfg, users, schedule, init, allocator))
    if cfg.feed_restart:
        # High waveguide loss favours clustering at the feed, which single-PA sweeps
        # from a mid-waveguide start rarely reach.
        layout = AntennaLayout(feed_positions(cfg), _lengths(cfg), cfg.scheme, cfg.D).validate()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptySweepWarning)  # packed PAs have no room until neighbours move
            res = run_ao(cfg, users, schedule, Initialization(layout, init.power, init_method), allocator)
        alt = make_report(cfg, users, schedule, res)
        if (alt.feasible, alt.sum_rate) > (rep.feasible, rep.sum_rate):
            rep = alt
    return rep


"""Gauss-Seidel one-dimensional grid search over PA positions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import channel_from_distance, channel_tensor, effective_channels, slot_signal_interference
from .hardware import AntennaLayout, config_propagation, coupling_amplitudes, pa_gain
from .scenario import SystemConfig, UserSet, waveguide_ys
from .scheduling import Schedule

RATE_TOL = 1e-9
GRID_TOL = 1e-12


class EmptySweepWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CandidateGrid:
    D: float
    G: int

    @property
    def points(self) -> np.ndarray:
        return (2 * np.arange(1, self.G + 1) - 1) * self.D / (2 * self.G)


def feasible_interval(layout: AntennaLayout, m: int, n: int) -> tuple[float, float]:
    """Closed interval the right endpoint of PA (m, n) may occupy."""
    if layout.scheme != "AWS":
        return 0.0, layout.D
    x, L = layout.x[m], layout.L[m]
    lo = (x[n - 1] if n > 0 else 0.0) + L[n]
    hi = x[n + 1] - L[n + 1] if n + 1 < layout.N else layout.D
    return lo, hi


def feasible_candidates(layout: AntennaLayout, m: int, n: int, grid: CandidateGrid) -> np.ndarray:
    """Indices (0-based) of grid midpoints inside the PA's feasible interval."""
    lo, hi = feasible_interval(layout, m, n)
    pts = grid.points
    return np.flatnonzero((pts >= lo - GRID_TOL) & (pts <= hi + GRID_TOL))


class RateModel:
    """Effective channels of a fixed user set, updated one PA at a time."""

    def __init__(self, users: UserSet, layout: AntennaLayout, schedule: Schedule, cfg: SystemConfig):
        self.users = users
        self.cfg = cfg
        self.schedule = schedule
        self.served = schedule.served
        self.const = config_propagation(cfg)
        self.xi = coupling_amplitudes(layout, cfg.chi)
        self.y = waveguide_ys(cfg)
        self.set_layout(layout)

    def set_layout(self, layout: AntennaLayout) -> None:
        self.layout = layout
        self.H = channel_tensor(self.users, layout, self.cfg)
        self.g = pa_gain(layout.x, self.xi, self.const, layout.scheme)
        self.E = effective_channels(self.H, self.g)

    def candidate_rows(self, m: int, n: int, xs: np.ndarray):
        """Channels and effective row of waveguide m with PA (m, n) moved to each ``xs``."""
        pos = self.users.positions
        d = np.sqrt((xs[:, None] - pos[None, :, 0]) ** 2 + (self.y[m] - pos[None, :, 1]) ** 2
                    + (self.cfg.h - pos[None, :, 2]) ** 2)
        h = channel_from_distance(d, self.cfg.f)  # (C, K)
        g = pa_gain(xs, self.xi[m, n], self.const, self.layout.scheme)  # (C,)
        base = self.E[m] - self.H[m, :, n] * self.g[m, n]
        return h, g, base[None, :] + h * g[:, None]

    def rates(self, w: np.ndarray, E: np.ndarray | None = None) -> np.ndarray:
        """Per-user rates, batched over any leading axes of ``E`` (..., M, K)."""
        E = self.E if E is None else E
        cfg = self.cfg
        out = np.zeros(E.shape[:-2] + (E.shape[-1],))
        for t, served_t in enumerate(self.served):
            a, b = slot_signal_interference(E[..., :, served_t], w[t], cfg.sigma2, cfg.interference_model)
            out[..., served_t] = np.log2(1.0 + a / b) / cfg.T
        return out

    def move(self, m: int, n: int, x_new: float, h_row: np.ndarray, g_new: complex, E_row: np.ndarray) -> None:
        x = self.layout.x.copy()
        x[m, n] = x_new
        self.layout = self.layout.with_x(x)
        self.H[m, :, n] = h_row
        self.g[m, n] = g_new
        self.E[m] = E_row


@dataclass
class PlacementResult:
    layout: AntennaLayout
    feasible: bool  # every PA update found a candidate meeting R_min
    moves: int
    sum_rates: list[float] = field(default_factory=list)  # after each PA update


def optimize_positions(layout: AntennaLayout, schedule: Schedule, w: np.ndarray, cfg: SystemConfig,
                       users: UserSet, model: RateModel | None = None,
                       fallback: str = "shortfall") -> PlacementResult:
    """One Gauss-Seidel sweep over all PAs (waveguides ascending, PAs ascending).

    Each PA moves to the grid point with the largest sum rate among points where
    every user meets ``R_min``; its current position is always a candidate, so
    accepted moves never lower the sum rate from a feasible point. If no
    candidate meets ``R_min`` the sweep is flagged and the PA goes to the
    point with the least total rate shortfall (ties by sum rate), or with
    ``fallback="sum_rate"`` to the unconstrained best.
    """
    model = model or RateModel(users, layout, schedule, cfg)
    if model.layout is not layout:
        model.set_layout(layout)
    w = np.asarray(w)
    grid = CandidateGrid(cfg.D, cfg.G)
    pts = grid.points
    feasible = True
    moves = 0
    trace = []
    for m in range(layout.M):
        for n in range(layout.N):
            idx = feasible_candidates(model.layout, m, n, grid)
            if idx.size == 0:
                warnings.warn(f"no feasible grid point for PA ({m}, {n}); left in place", EmptySweepWarning)
            xs = np.concatenate([[model.layout.x[m, n]], pts[idx]])
            h, g, rows = model.candidate_rows(m, n, xs)
            E = np.broadcast_to(model.E, (xs.size,) + model.E.shape).copy()
            E[:, m, :] = rows
            rates = model.rates(w, E)
            total = rates.sum(axis=1)
            ok = np.all(rates >= cfg.R_min - RATE_TOL, axis=1)
            if ok.any():
                best = int(np.argmax(np.where(ok, total, -np.inf)))
            else:
                feasible = False
                short = np.maximum(cfg.R_min - rates, 0.0).sum(axis=1)
                best = int(np.lexsort((-total, short))[0]) if fallback == "shortfall" else int(np.argmax(total))
            if best != 0:
                model.move(m, n, float(xs[best]), h[best], g[best], rows[best])
                moves += 1
            trace.append(float(total[best]))
    return PlacementResult(model.layout.validate(), feasible, moves, trace)

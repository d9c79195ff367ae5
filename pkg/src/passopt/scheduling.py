"""Hierarchical user scheduling: waveguide pairing, then in-slot selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import BlockPolytope, TransportationPolytope, frank_wolfe_maximize, solve_transportation
from .scenario import SystemConfig, UserSet, user_user_distances, user_waveguide_distances

LN2 = math.log(2.0)
MIN_USER_SEPARATION = 1e-6  # m


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Binary pairing (K, M) and slot (K, T) matrices."""

    delta_km: np.ndarray
    delta_kt: np.ndarray
    relaxed_km: np.ndarray | None = None
    relaxed_kt: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.delta_km.shape[0]

    @property
    def M(self) -> int:
        return self.delta_km.shape[1]

    @property
    def T(self) -> int:
        return self.delta_kt.shape[1]

    @property
    def waveguide_of(self) -> np.ndarray:
        return np.argmax(self.delta_km, axis=1)

    @property
    def slot_of(self) -> np.ndarray:
        return np.argmax(self.delta_kt, axis=1)

    @property
    def served(self) -> np.ndarray:
        """(T, M) index of the user served by each waveguide in each slot."""
        out = np.full((self.T, self.M), -1, dtype=int)
        out[self.slot_of, self.waveguide_of] = np.arange(self.K)
        return out

    def violations(self) -> list[str]:
        km, kt = self.delta_km, self.delta_kt
        out = []
        if not (np.isin(km, (0, 1)).all() and np.isin(kt, (0, 1)).all()):
            out.append("non-binary entries")
            return out
        T, M = self.T, self.M
        if not np.all(km.sum(axis=1) == 1):
            out.append("user not paired with exactly one waveguide")
        if not np.all(km.sum(axis=0) == T):
            out.append("waveguide not paired with T users")
        if not np.all(kt.sum(axis=0) == M):
            out.append("slot does not hold M users")
        if not np.all(kt.sum(axis=1) == 1):
            out.append("user not in exactly one slot")
        if not out and not np.all(km.T @ kt == 1):
            out.append("waveguide serves more than one user in a slot")
        return out

    def validate(self) -> "Schedule":
        bad = self.violations()
        if bad:
            raise ScheduleError("; ".join(bad))
        return self


def _argmax_lowest(row: np.ndarray) -> int:
    return int(np.flatnonzero(row == row.max())[0])


def greedy_round(relaxed: np.ndarray, capacities) -> np.ndarray:
    """Round a relaxed assignment: argmax per row, then trim overfull columns.

    Trimmed rows (smallest relaxed value first, ties to the higher index) move
    to their best-scoring column that still has room.
    """
    score = np.array(relaxed, dtype=float)
    caps = np.asarray(capacities, dtype=int)
    n, f = score.shape
    X = np.zeros((n, f))
    X[np.arange(n), [_argmax_lowest(r) for r in score]] = 1.0
    while True:
        load = X.sum(axis=0)
        over = np.flatnonzero(load > caps)
        if over.size == 0:
            return X
        for c in over:
            members = np.flatnonzero(X[:, c])
            order = sorted(members, key=lambda k: (score[k, c], -k))
            for k in order[: int(load[c] - caps[c])]:
                X[k, c] = 0.0
                score[k, c] = -np.inf
                room = X.sum(axis=0) < caps
                cand = np.where(room, score[k], -np.inf)
                X[k, _argmax_lowest(cand)] = 1.0


def pairing_cost(delta_km: np.ndarray, users: UserSet, cfg: SystemConfig) -> float:
    return float(np.sum(delta_km * user_waveguide_distances(users, cfg) ** 2))


def pair_waveguides(users: UserSet, cfg: SystemConfig) -> np.ndarray:
    """Pairing minimising the total squared user-waveguide distance.

    The relaxed LP is solved exactly; its optimal vertex is integral, so the
    greedy rounding step below returns it unchanged.
    """
    cost = user_waveguide_distances(users, cfg) ** 2
    relaxed = solve_transportation(cost, [cfg.T] * cfg.M)
    return greedy_round(relaxed, [cfg.T] * cfg.M)


@dataclass
class SlotProblem:
    """Data of the relaxed in-slot selection objective for a fixed pairing."""

    dk2: np.ndarray  # (K,) squared distance of each user to its waveguide
    inv_d2: np.ndarray  # (K, K) 1/d_ik^2, zero diagonal
    sigma2: float
    T: int

    @classmethod
    def build(cls, delta_km: np.ndarray, users: UserSet, cfg: SystemConfig) -> "SlotProblem":
        d_km = user_waveguide_distances(users, cfg)
        dk2 = np.sum(delta_km * d_km ** 2, axis=1)
        d_ik = user_user_distances(users)
        np.fill_diagonal(d_ik, np.inf)
        d_ik = np.maximum(d_ik, MIN_USER_SEPARATION)
        return cls(dk2=dk2, inv_d2=1.0 / d_ik ** 2, sigma2=cfg.sigma2, T=cfg.T)

    def proxy(self, delta_kt: np.ndarray) -> np.ndarray:
        """I_{k,t}: interference proxy of user k if it sat in slot t."""
        return self.dk2[:, None] * (self.sigma2 + self.inv_d2 @ delta_kt)

    def per_user(self, delta_kt: np.ndarray) -> np.ndarray:
        I = self.proxy(delta_kt)
        return (np.log2(I + 1.0) - np.log2(I)) / self.T

    def value(self, delta_kt: np.ndarray, weights: np.ndarray) -> float:
        return float(np.sum(weights * self.per_user(delta_kt)))

    def surrogate(self, delta_kt: np.ndarray, expansion: np.ndarray, weights: np.ndarray) -> float:
        I = self.proxy(delta_kt)
        I0 = self.proxy(expansion)
        lin = -np.log2(I0) - (I - I0) / (LN2 * I0)
        return float(np.sum(weights * (np.log2(I + 1.0) + lin)) / self.T)

    def surrogate_grad(self, delta_kt: np.ndarray, expansion: np.ndarray, weights: np.ndarray) -> np.ndarray:
        I = self.proxy(delta_kt)
        I0 = self.proxy(expansion)
        coef = weights * self.dk2[:, None] * (1.0 / (I + 1.0) - 1.0 / I0) / (LN2 * self.T)
        return self.inv_d2.T @ coef


def slot_objective(delta_kt: np.ndarray, delta_km: np.ndarray, users: UserSet, cfg: SystemConfig,
                   expansion: np.ndarray | None = None, weights: np.ndarray | None = None):
    """SCA surrogate value and gradient at ``delta_kt``.

    Defaults: expansion point = ``delta_kt`` (where the surrogate is tight) and
    weights = ``delta_kt``.
    """
    d_ik = user_user_distances(users)
    np.fill_diagonal(d_ik, np.inf)
    if np.any(d_ik == 0):
        raise ScheduleError("coincident users")
    prob = SlotProblem.build(delta_km, users, cfg)
    expansion = delta_kt if expansion is None else expansion
    weights = delta_kt if weights is None else weights
    return prob.surrogate(delta_kt, expansion, weights), prob.surrogate_grad(delta_kt, expansion, weights)


def schedule_objective(delta_kt: np.ndarray, delta_km: np.ndarray, users: UserSet, cfg: SystemConfig) -> float:
    """Distance-based SINR proxy sum for an integral slot assignment."""
    prob = SlotProblem.build(delta_km, users, cfg)
    return prob.value(delta_kt, delta_kt)


def slot_polytope(delta_km: np.ndarray, T: int) -> BlockPolytope:
    """Each waveguide's T users spread one per slot."""
    K, M = delta_km.shape
    blocks = tuple((np.flatnonzero(delta_km[:, m]), TransportationPolytope(T, (1,) * T))
                   for m in range(M))
    return BlockPolytope(K, T, blocks)


@dataclass
class SlotSelection:
    delta_kt: np.ndarray
    relaxed: np.ndarray
    trace: list[tuple[float, float]] = field(default_factory=list)  # (before, after) per SCA step
    iterations: int = 0
    swaps: int = 0  # exchanges accepted by the local search after rounding


def _initial_relaxed(poly: BlockPolytope, T: int, mix: float = 0.1) -> np.ndarray:
    # Symmetric start is a stationary point; tilt it toward a fixed vertex.
    tilt = np.zeros((poly.n_rows, T))
    for rows, _ in poly.blocks:
        tilt[rows, np.arange(len(rows)) % T] = 1.0
    return (1.0 - mix) * poly.barycenter() + mix * tilt


def swap_search(delta_kt: np.ndarray, delta_km: np.ndarray, prob: SlotProblem) -> tuple[np.ndarray, int]:
    """First-improvement exchange of two users of one waveguide between their slots."""
    X = delta_kt.copy()
    best = prob.value(X, X)
    swaps = 0
    improved = True
    while improved:
        improved = False
        for m in range(delta_km.shape[1]):
            for a, b in itertools.combinations(np.flatnonzero(delta_km[:, m]), 2):
                Y = X.copy()
                Y[[a, b]] = Y[[b, a]]
                v = prob.value(Y, Y)
                if v > best * (1 + 1e-12):
                    X, best, improved = Y, v, True
                    swaps += 1
    return X, swaps


def select_slots(delta_km: np.ndarray, users: UserSet, cfg: SystemConfig,
                 rel_tol: float = 1e-5, fw_iter: int = 100, polish: bool = True) -> SlotSelection:
    """Relaxed SCA over the slot polytope, greedy rounding, then optional swap polishing."""
    T = cfg.T
    poly = slot_polytope(delta_km, T)
    if T == 1:
        ones = np.ones((cfg.K, 1))
        return SlotSelection(ones, ones)
    prob = SlotProblem.build(delta_km, users, cfg)
    delta = _initial_relaxed(poly, T)
    trace = []
    it = 0
    for it in range(1, cfg.sca_slot_max_iter + 1):
        weights = delta if cfg.slot_weighting == "weighted" else np.ones_like(delta)
        before = prob.value(delta, weights)
        res = frank_wolfe_maximize(
            lambda z: prob.surrogate(z, delta, weights),
            lambda z: prob.surrogate_grad(z, delta, weights),
            poly, delta, max_iter=fw_iter, tol=1e-10)
        after = prob.value(res.x, weights)
        trace.append((before, after))
        delta_prev, delta = delta, res.x
        if abs(after - before) <= rel_tol * max(abs(before), 1e-300) and np.allclose(delta, delta_prev, atol=1e-6):
            break
    rounded = np.zeros_like(delta)
    for rows, _ in poly.blocks:
        rounded[rows] = greedy_round(delta[rows], [1] * T)
    swaps = 0
    if polish:
        rounded, swaps = swap_search(rounded, delta_km, prob)
    return SlotSelection(rounded, delta, trace, it, swaps)


def hierarchical_schedule(users: UserSet, cfg: SystemConfig) -> tuple[Schedule, SlotSelection]:
    delta_km = pair_waveguides(users, cfg)
    sel = select_slots(delta_km, users, cfg)
    return Schedule(delta_km, sel.delta_kt, relaxed_kt=sel.relaxed).validate(), sel


def random_pairing(users: UserSet, cfg: SystemConfig, rng: np.random.Generator) -> Schedule:
    """Uniformly random feasible pairing and slot assignment."""
    K, M, T = cfg.K, cfg.M, cfg.T
    perm = rng.permutation(K)
    delta_km = np.zeros((K, M))
    delta_kt = np.zeros((K, T))
    for m in range(M):
        members = perm[m * T:(m + 1) * T]
        delta_km[members, m] = 1.0
        delta_kt[members, rng.permutation(T)] = 1.0
    return Schedule(delta_km, delta_kt).validate()

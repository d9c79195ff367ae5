import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from passopt.experiments import bootstrap_ci
from passopt.scenario import SystemConfig, UserSet, generate_users, user_waveguide_distances
from passopt.scheduling import (Schedule, ScheduleError, SlotProblem, greedy_round, hierarchical_schedule,
                                pair_waveguides, pairing_cost, random_pairing, schedule_objective, select_slots,
                                slot_objective)


def all_pairings(K, M, T):
    for labels in itertools.product(range(M), repeat=K):
        if np.all(np.bincount(labels, minlength=M) == T):
            X = np.zeros((K, M))
            X[np.arange(K), labels] = 1
            yield X


def slot_assignments(delta_km, T):
    """Every integral slot matrix with one user per (waveguide, slot)."""
    K, M = delta_km.shape
    groups = [np.flatnonzero(delta_km[:, m]) for m in range(M)]
    for perms in itertools.product(*(itertools.permutations(range(T)) for _ in range(M))):
        X = np.zeros((K, T))
        for g, p in zip(groups, perms):
            X[g, list(p)] = 1
        yield X


def test_pairing_zero_lateral_distance():
    cfg = SystemConfig(K=2, M=2, D_wg=5.0, d2=10.0)
    users = UserSet(np.array([[3.0, 7.5, 0.0], [3.0, 2.5, 0.0]]))
    X = pair_waveguides(users, cfg)
    assert np.array_equal(X, [[0, 1], [1, 0]])


@pytest.mark.parametrize("seed", range(6))
def test_pairing_matches_enumeration(seed):
    cfg = SystemConfig(K=6, M=3)
    users = generate_users(cfg, np.random.default_rng(seed))
    best = min(pairing_cost(X, users, cfg) for X in all_pairings(6, 3, 2))
    assert pairing_cost(pair_waveguides(users, cfg), users, cfg) == pytest.approx(best, rel=1e-12)


def test_equidistant_tie_break():
    relaxed = np.full((4, 2), 0.5)
    X = greedy_round(relaxed, [2, 2])
    # every row prefers column 0; the highest indices are moved out first
    assert np.array_equal(X, [[1, 0], [1, 0], [0, 1], [0, 1]])


@given(st.integers(0, 10_000))
def test_pairing_beats_random_pairings(seed):
    cfg = SystemConfig()
    rng = np.random.default_rng(seed)
    users = generate_users(cfg, rng)
    cost = pairing_cost(pair_waveguides(users, cfg), users, cfg)
    for _ in range(200):
        assert cost <= pairing_cost(random_pairing(users, cfg, rng).delta_km, users, cfg) + 1e-9


def test_slot_objective_single_user_per_slot():
    cfg = SystemConfig(K=2, M=1, d2=10.0)
    users = UserSet(np.array([[2.0, 1.0, 0.0], [8.0, 9.0, 0.0]]))
    km = np.ones((2, 1))
    kt = np.eye(2)
    value, _ = slot_objective(kt, km, users, cfg)
    d2 = user_waveguide_distances(users, cfg)[:, 0] ** 2
    expected = np.sum(np.log2(1 + 1 / (d2 * cfg.sigma2))) / cfg.T
    assert value == pytest.approx(expected, rel=1e-12)


def _cluster_instance():
    cfg = SystemConfig(K=4, M=2, d2=20.0)
    # users 0, 1 near x=1 and users 2, 3 near x=9; 0 and 2 sit closer to waveguide 1
    users = UserSet(np.array([[1.0, 9.0, 0], [1.0, 11.0, 0], [9.0, 9.0, 0], [9.0, 11.0, 0]]))
    return cfg, users


def test_far_pair_scores_higher():
    cfg, users = _cluster_instance()
    km = pair_waveguides(users, cfg)
    assert np.array_equal(km, [[1, 0], [0, 1], [1, 0], [0, 1]])
    near = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], float)  # users 0 and 1 share a slot
    far = np.array([[1, 0], [0, 1], [0, 1], [1, 0]], float)
    assert schedule_objective(far, km, users, cfg) > schedule_objective(near, km, users, cfg)


def test_select_slots_splits_clusters():
    cfg, users = _cluster_instance()
    km = pair_waveguides(users, cfg)
    sel = select_slots(km, users, cfg)
    best = max(slot_assignments(km, 2), key=lambda X: schedule_objective(X, km, users, cfg))
    assert schedule_objective(sel.delta_kt, km, users, cfg) == pytest.approx(schedule_objective(best, km, users, cfg))
    slot = np.argmax(sel.delta_kt, axis=1)
    assert slot[0] != slot[1] and slot[2] != slot[3]


def test_single_slot():
    cfg = SystemConfig(K=3, M=3)
    users = generate_users(cfg, np.random.default_rng(0))
    sched, _ = hierarchical_schedule(users, cfg)
    assert np.all(sched.delta_kt == 1)


def test_surrogate_tight_and_minorising():
    cfg = SystemConfig()
    rng = np.random.default_rng(7)
    users = generate_users(cfg, rng)
    km = pair_waveguides(users, cfg)
    prob = SlotProblem.build(km, users, cfg)
    base = np.full((cfg.K, cfg.T), 1 / cfg.T)
    w = rng.random((cfg.K, cfg.T))
    assert prob.surrogate(base, base, w) == pytest.approx(prob.value(base, w), rel=1e-12)
    for X in list(slot_assignments(km, cfg.T))[:50]:
        Z = 0.5 * X + 0.5 * base
        assert prob.surrogate(Z, base, w) <= prob.value(Z, w) + 1e-9


def test_surrogate_gradient_matches_finite_differences():
    cfg = SystemConfig()
    users = generate_users(cfg, np.random.default_rng(8))
    km = pair_waveguides(users, cfg)
    prob = SlotProblem.build(km, users, cfg)
    rng = np.random.default_rng(0)
    x0, x = rng.random((cfg.K, cfg.T)), rng.random((cfg.K, cfg.T))
    w = rng.random((cfg.K, cfg.T))
    g = prob.surrogate_grad(x, x0, w)
    eps = 1e-6
    for idx in [(0, 0), (4, 1), (8, 2)]:
        e = np.zeros_like(x)
        e[idx] = eps
        fd = (prob.surrogate(x + e, x0, w) - prob.surrogate(x - e, x0, w)) / (2 * eps)
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_slot_sca_steps_ascend(seed):
    cfg = SystemConfig()
    users = generate_users(cfg, np.random.default_rng(seed))
    sel = select_slots(pair_waveguides(users, cfg), users, cfg)
    for before, after in sel.trace:
        assert after >= before - 1e-9 * max(1.0, abs(before))
    assert np.all(sel.delta_kt.sum(axis=0) == cfg.M) and np.all(sel.delta_kt.sum(axis=1) == 1)


def test_hus_beats_random_slots_on_average():
    cfg = SystemConfig()
    diffs = []
    for s in range(100):
        rng = np.random.default_rng(s)
        users = generate_users(cfg, rng)
        sched, _ = hierarchical_schedule(users, cfg)
        rnd = np.zeros((cfg.K, cfg.T))
        for m in range(cfg.M):
            rnd[np.flatnonzero(sched.delta_km[:, m]), rng.permutation(cfg.T)] = 1
        diffs.append(schedule_objective(sched.delta_kt, sched.delta_km, users, cfg)
                     - schedule_objective(rnd, sched.delta_km, users, cfg))
    lo, _ = bootstrap_ci(np.array(diffs))
    assert np.mean(diffs) > 0 and lo > 0


def test_random_pairing_feasible_and_varied():
    cfg = SystemConfig(K=4, M=2)
    users = generate_users(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(1000):
        s = random_pairing(users, cfg, rng)
        assert not s.violations()
        seen.add((s.delta_km.tobytes(), s.delta_kt.tobytes()))
    assert len(seen) > 5


def test_random_pairing_reproducible():
    cfg = SystemConfig()
    users = generate_users(cfg, np.random.default_rng(0))
    a = random_pairing(users, cfg, np.random.default_rng(3))
    b = random_pairing(users, cfg, np.random.default_rng(3))
    assert np.array_equal(a.delta_km, b.delta_km) and np.array_equal(a.delta_kt, b.delta_kt)


def test_schedule_validation():
    km = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])
    with pytest.raises(ScheduleError):
        Schedule(km, np.array([[1, 0], [1, 0], [0, 1], [0, 1]])).validate()  # wg 0 serves two users in slot 0
    with pytest.raises(ScheduleError):
        Schedule(km * 0.5, np.eye(4)[:, :2]).validate()
    s = Schedule(km, np.array([[1, 0], [0, 1], [0, 1], [1, 0]])).validate()
    assert np.array_equal(s.served, [[0, 3], [1, 2]])


def test_coincident_users_rejected():
    cfg = SystemConfig(K=2, M=1)
    users = UserSet(np.array([[1.0, 1.0, 0], [1.0, 1.0, 0]]))
    with pytest.raises(ScheduleError):
        slot_objective(np.eye(2), np.ones((2, 1)), users, cfg)
    sched, _ = hierarchical_schedule(users, cfg)  # perturbed internally
    assert not sched.violations()

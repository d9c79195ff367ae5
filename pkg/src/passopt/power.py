"""Per-slot power allocation by fractional programming and SCA, plus MRT."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channel import slot_signal_interference
from .kernels import constrained_concave_maximize, maximize_concave_qcqp, project_power_ball
from .scenario import SystemConfig
from .scheduling import Schedule

LN2 = math.log(2.0)
A_FLOOR = 1e-12  # expansion floor for the signal power, in units of the noise power


def lagrangian_dual_transform(a, b, nu, T: int = 1):
    """Rate expressed through the auxiliary SINR variable ``nu``; tight at nu = a/b."""
    return (np.log2(1.0 + nu) - nu / LN2 + (1.0 + nu) * a / (LN2 * (a + b))) / T


def quadratic_transform(a, b, y):
    """``2 y sqrt(a) - y^2 (a + b)``; maximised at y = sqrt(a)/(a+b) with value a/(a+b)."""
    return 2.0 * y * np.sqrt(a) - y * y * (a + b)


@dataclass(frozen=True)
class PowerAllocation:
    """Coefficients ``w[t, m]`` of waveguide m in slot t."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=complex, ndmin=2)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def slot_power(self) -> np.ndarray:
        return np.sum(np.abs(self.w) ** 2, axis=1)

    def satisfies_budget(self, P: float, rtol: float = 1e-9) -> bool:
        return bool(np.all(self.slot_power() <= P * (1.0 + rtol)))


def equal_power(cfg: SystemConfig) -> PowerAllocation:
    return PowerAllocation(np.full((cfg.T, cfg.M), math.sqrt(cfg.P / cfg.M), dtype=complex))


def random_power(cfg: SystemConfig, rng: np.random.Generator) -> PowerAllocation:
    """Random split of the full budget with random phases in every slot."""
    share = rng.dirichlet(np.ones(cfg.M), size=cfg.T)
    phase = np.exp(2j * np.pi * rng.random((cfg.T, cfg.M)))
    return PowerAllocation(np.sqrt(cfg.P * share) * phase)


@dataclass
class FPState:
    a: np.ndarray
    b: np.ndarray

    @property
    def nu(self) -> np.ndarray:
        return self.a / self.b

    @property
    def y(self) -> np.ndarray:
        return np.sqrt(self.a) / (self.a + self.b)


class SlotProblem:
    """One slot in normalised units: noise power 1, power budget 1.

    ``Es[i, j]`` is the effective channel from waveguide i to the user served by
    waveguide j, already scaled by sqrt(P / sigma2).
    """

    def __init__(self, Es: np.ndarray, T: int, R_min: float, interference_model: str = "coherent"):
        self.Es = np.asarray(Es, dtype=complex)
        self.M = self.Es.shape[0]
        self.T = T
        self.R_min = R_min
        self.model = interference_model
        self.gamma = 2.0 ** (T * R_min) - 1.0
        self.own = np.abs(np.diag(self.Es)) ** 2

    def ab(self, w: np.ndarray):
        return slot_signal_interference(self.Es, w, 1.0, self.model)

    def rates(self, w: np.ndarray) -> np.ndarray:
        a, b = self.ab(w)
        return np.log2(1.0 + a / b) / self.T

    def sum_rate(self, w: np.ndarray) -> float:
        return float(self.rates(w).sum())

    def is_feasible(self, w: np.ndarray, tol: float = 1e-6) -> bool:
        return bool(np.all(self.rates(w) >= self.R_min - tol))

    def merit(self, w: np.ndarray, tol: float = 1e-6) -> tuple[bool, float]:
        """Ranking key: feasible points by sum rate, infeasible ones by total shortfall."""
        r = self.rates(w)
        short = np.maximum(self.R_min - r, 0.0)
        if np.all(short <= tol):
            return True, float(r.sum())
        return False, -float(short.sum())

    # Quadratic pieces: received(w)[j] = sum_i Es[i, j] w_i.
    def _interference_grad(self, w: np.ndarray) -> np.ndarray:
        """Gradient (d/d conj w) of b_j for every j: (M, M) indexed [j, i]."""
        contrib = self.Es * w[:, None]
        if self.model == "coherent":
            other = contrib.sum(axis=0) - np.diag(contrib)
            G = np.conj(self.Es).T * other[:, None]
        else:
            G = (np.abs(self.Es.T) ** 2) * w[None, :]
        np.fill_diagonal(G, 0.0)
        return G


@dataclass
class SurrogateModel:
    """Concave SCA surrogate of the slot sum rate built at ``w0``."""

    prob: SlotProblem
    w0: np.ndarray
    state: FPState
    w_lin: np.ndarray  # expansion point of the sqrt(a) / a tangents (nudged away from 0)

    @classmethod
    def build(cls, prob: SlotProblem, w0: np.ndarray) -> "SurrogateModel":
        a, b = prob.ab(w0)
        w_lin = np.array(w0, dtype=complex)
        small = a < A_FLOOR
        if np.any(small):
            scale = np.sqrt(A_FLOOR / np.maximum(prob.own, 1e-300))
            phase = np.where(np.abs(w_lin) > 0, np.exp(1j * np.angle(w_lin)), 1.0)
            w_lin = np.where(small, scale * phase, w_lin)
            a = np.where(small, prob.own * np.abs(w_lin) ** 2, a)
        return cls(prob, np.array(w0, dtype=complex), FPState(a, b), w_lin)

    @property
    def weight(self) -> np.ndarray:
        return (1.0 + self.state.nu) / (self.prob.T * LN2)

    def sqrt_a_tangent(self, w):
        wl = self.w_lin
        sa0 = np.sqrt(self.prob.own) * np.abs(wl)
        return sa0 + self.prob.own * np.real(np.conj(wl) * (w - wl)) / sa0

    def a_tangent(self, w):
        wl = self.w_lin
        a0 = self.prob.own * np.abs(wl) ** 2
        return a0 + 2.0 * self.prob.own * np.real(np.conj(wl) * (w - wl))

    def constant(self) -> float:
        nu = self.state.nu
        return float(np.sum(np.log2(1.0 + nu) - nu / LN2) / self.prob.T)

    def value(self, w) -> float:
        a, b = self.prob.ab(w)
        y = self.state.y
        inner = 2.0 * y * self.sqrt_a_tangent(w) - y * y * (a + b)
        return self.constant() + float(np.sum(self.weight * inner))

    def grad(self, w) -> np.ndarray:
        """d/d conj(w) of the surrogate value."""
        p = self.prob
        y, wt = self.state.y, self.weight
        wl = self.w_lin
        sa0 = np.sqrt(p.own) * np.abs(wl)
        # sqrt(a) tangent: Re{c^* w} -> c / 2
        g = wt * 2.0 * y * (p.own * wl / sa0) / 2.0
        # a_j = own_j |w_j|^2 -> own_j w_j
        g = g - wt * y * y * p.own * w
        G = p._interference_grad(w)  # [j, i]
        g = g - (wt * y * y) @ G
        return g

    def c2_constraints(self):
        """Convex inner approximations of the minimum-rate constraints (<= 0)."""
        p = self.prob
        if p.R_min <= 0:
            return []
        out = []
        for j in range(p.M):
            a0, b0 = self.state.a[j], self.state.b[j]
            scale = p.gamma * b0 + a0

            def g(w, j=j, scale=scale):
                _, b = p.ab(w)
                return float((p.gamma * b[j] - self.a_tangent(w)[j]) / scale)

            def dg(w, j=j, scale=scale):
                G = p._interference_grad(w)
                out = p.gamma * G[j].copy()
                out[j] -= p.own[j] * self.w_lin[j]
                return out / scale

            out.append((g, dg))
        return out


def _to_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def _to_complex(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def _real_quadratic(H: np.ndarray) -> np.ndarray:
    """Real matrix R with x^T R x = w^H H w for Hermitian H and x = [Re w; Im w]."""
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def _interference_forms(prob: SlotProblem) -> np.ndarray:
    """(M, M, M) Hermitian B_j with b_j - 1 = w^H B_j w."""
    M = prob.M
    B = np.zeros((M, M, M), dtype=complex)
    for j in range(M):
        u = prob.Es[:, j].copy()
        u[j] = 0.0
        if prob.model == "coherent":
            B[j] = np.outer(np.conj(u), u)
        else:
            B[j] = np.diag(np.abs(u) ** 2)
    return B


def surrogate_qcqp(model: SurrogateModel, gamma: float | None = None):
    """Real data ``(c, Q, constraints, offset)`` of the surrogate problem.

    The surrogate equals ``offset + c.x - x.Q.x`` and each minimum-rate approximation
    reads ``x.A.x + d.x + e <= 0`` (rows scaled to unit size).
    """
    p = model.prob
    gamma = p.gamma if gamma is None else gamma
    wt, y, wl = model.weight, model.state.y, model.w_lin
    sa0 = np.sqrt(p.own) * np.abs(wl)
    c = _to_real(wt * 2.0 * y * p.own * wl / sa0)
    B = _interference_forms(p)
    Hq = np.einsum("j,jab->ab", wt * y * y, B) + np.diag(wt * y * y * p.own)
    Q = _real_quadratic(Hq)
    offset = model.constant() - float(np.sum(wt * y * y))
    cons = []
    if p.R_min > 0:
        for j in range(p.M):
            scale = p.gamma * model.state.b[j] + model.state.a[j]
            lin = np.zeros(p.M, dtype=complex)
            lin[j] = 2.0 * p.own[j] * wl[j]
            cons.append((gamma * _real_quadratic(B[j]) / scale, -_to_real(lin) / scale,
                         (gamma + p.own[j] * abs(wl[j]) ** 2) / scale))
    return c, Q, cons, offset


def _solve_surrogate_al(model: SurrogateModel):
    """Generic augmented-Lagrangian route; slower, kept as a cross-check."""
    # Real gradient of a real function of complex w is 2 * d/d conj(w).
    constraints = [(lambda x, g=g: g(_to_complex(x)),
                    lambda x, dg=dg: _to_real(2.0 * dg(_to_complex(x))))
                   for g, dg in model.c2_constraints()]
    scale = float(np.max(model.weight))
    res = constrained_concave_maximize(
        lambda x: model.value(_to_complex(x)) / scale,
        lambda x: _to_real(2.0 * model.grad(_to_complex(x))) / scale,
        constraints, 1.0, _to_real(model.w0))
    return _to_complex(res.x), res.feasible


def _solve_surrogate(model: SurrogateModel, bisect_steps: int = 10):
    """Maximise the surrogate over the unit ball and the inner approximation of the minimum-rate constraints.

    If the approximation is empty the SINR target is lowered by bisection to
    the largest value for which it is not, and ``False`` is returned.
    """
    c, Q, cons, _ = surrogate_qcqp(model)
    scale = float(np.max(np.abs(c))) or 1.0
    res = maximize_concave_qcqp(c / scale, Q / scale, cons, 1.0)
    if res.feasible or not cons:
        return _to_complex(res.x), True
    lo, hi = 0.0, model.prob.gamma
    best = maximize_concave_qcqp(c / scale, Q / scale, surrogate_qcqp(model, 0.0)[2], 1.0)
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        trial = maximize_concave_qcqp(c / scale, Q / scale, surrogate_qcqp(model, mid)[2], 1.0)
        if trial.feasible:
            lo, best = mid, trial
        else:
            hi = mid
    return _to_complex(best.x), False


def sca_power_step(prob: SlotProblem, w_prev: np.ndarray):
    """One SCA update of a slot's coefficients (normalised units).

    Returns ``(w_next, surrogate_feasible)``. If ``w_prev`` already meets the
    rate targets the step is only accepted when it does not lower the surrogate,
    which in turn lower-bounds the true sum rate.
    """
    model = SurrogateModel.build(prob, w_prev)
    w_new, ok = _solve_surrogate(model)
    w_new = project_power_ball(w_new, 1.0)
    if prob.is_feasible(w_prev) and (not prob.is_feasible(w_new) or model.value(w_new) < model.value(w_prev)):
        return np.array(w_prev, dtype=complex), ok
    return w_new, ok


@dataclass
class SlotResult:
    w: np.ndarray
    feasible: bool
    trace: list[float] = field(default_factory=list)  # incumbent sum rate per iteration
    trace_feasible: list[bool] = field(default_factory=list)


def refine_slot(prob: SlotProblem, w: np.ndarray, max_iter: int = 200):
    """Local SQP on the exact slot problem, started from ``w``.

    Returns the refined point, or ``None`` if it does not improve the merit.
    """
    B = _interference_forms(prob)
    Br = np.array([_real_quadratic(Bj) for Bj in B])
    Sr = Br.copy()
    for j in range(prob.M):
        Sr[j, j, j] += prob.own[j]
        Sr[j, j + prob.M, j + prob.M] += prob.own[j]
    scale = 2.0 / (prob.T * LN2)

    def rates_grad(x):
        s = 1.0 + np.einsum("i,jik,k->j", x, Sr, x)
        b = 1.0 + np.einsum("i,jik,k->j", x, Br, x)
        r = (np.log2(s) - np.log2(b)) / prob.T
        g = scale * (np.einsum("jik,k->ji", Sr, x) / s[:, None] - np.einsum("jik,k->ji", Br, x) / b[:, None])
        return r, g

    def neg_sum(x):
        r, g = rates_grad(x)
        return -r.sum(), -g.sum(axis=0)

    cons = [{"type": "ineq", "fun": lambda x: 1.0 - x @ x, "jac": lambda x: -2.0 * x}]
    if prob.R_min > 0:
        cons.append({"type": "ineq", "fun": lambda x: rates_grad(x)[0] - prob.R_min,
                     "jac": lambda x: rates_grad(x)[1]})
    res = minimize(neg_sum, _to_real(np.asarray(w, dtype=complex)), jac=True, method="SLSQP",
                   constraints=cons, options={"maxiter": max_iter, "ftol": 1e-12})
    if not np.all(np.isfinite(res.x)):
        return None
    w_new = project_power_ball(_to_complex(res.x), 1.0)
    return w_new if prob.merit(w_new) > prob.merit(w) else None


def optimize_slot(prob: SlotProblem, w0: np.ndarray, max_iter: int = 50, rel_tol: float = 1e-5,
                  momentum: bool = True, refine: bool = True) -> SlotResult:
    """SCA on one slot, optionally with restarted Nesterov extrapolation.

    With momentum the surrogate is expanded at an extrapolated point; the
    result is kept only if its merit is no worse than the current iterate's,
    otherwise a plain step is taken and momentum is reset. Plain steps creep
    when the gain comes from re-phasing interferers, so with ``refine`` the SCA
    limit is finished off by a local SQP step.
    """
    w = project_power_ball(np.asarray(w0, dtype=complex), 1.0)
    w_prev = w
    r = prob.sum_rate(w)
    key = prob.merit(w)
    best = (key, w)
    trace, flags = [r], [key[0]]
    k = 1
    for _ in range(max_iter):
        accepted = False
        if momentum and k > 1:
            v = project_power_ball(w + (k - 1) / (k + 2) * (w - w_prev), 1.0)
            cand, _ = sca_power_step(prob, v)
            key_cand = prob.merit(cand)
            accepted = key_cand >= key
            if accepted:
                k += 1
        if not accepted:
            cand, _ = sca_power_step(prob, w)
            key_cand = prob.merit(cand)
            k = 2
        r_cand = prob.sum_rate(cand)
        w_prev, w = w, cand
        done = abs(r_cand - r) <= rel_tol * max(abs(r), 1e-12)
        r, key = r_cand, key_cand
        if key > best[0]:
            best = (key, w)
        trace.append(prob.sum_rate(best[1]))
        flags.append(best[0][0])
        if done:
            break
    if refine:
        w_ref = refine_slot(prob, best[1])
        if w_ref is not None:
            best = (prob.merit(w_ref), w_ref)
            trace.append(prob.sum_rate(w_ref))
            flags.append(best[0][0])
    return SlotResult(best[1], best[0][0], trace, flags)


def slot_problems(E: np.ndarray, schedule: Schedule, cfg: SystemConfig) -> list[SlotProblem]:
    scale = math.sqrt(cfg.P / cfg.sigma2)
    return [SlotProblem(E[:, served_t] * scale, cfg.T, cfg.R_min, cfg.interference_model)
            for served_t in schedule.served]


@dataclass
class AllocationResult:
    power: PowerAllocation
    feasible: np.ndarray  # per slot
    traces: list[list[float]]


def dominant_starts(M: int, share: float = 0.9) -> list[np.ndarray]:
    """Unit-power points giving ``share`` of the budget to one waveguide each."""
    if M == 1:
        return []
    out = []
    for j in range(M):
        p = np.full(M, (1.0 - share) / (M - 1))
        p[j] = share
        out.append(np.sqrt(p).astype(complex))
    return out


def allocate_power(E: np.ndarray, schedule: Schedule, cfg: SystemConfig, w_init,
                   restarts: bool = True) -> AllocationResult:
    """Fractional-programming SCA per slot; slots are independent.

    The run from ``w_init`` is always made. With ``restarts`` the slot is also
    solved from each dominant-waveguide split (phases of ``w_init``) and the
    best result by :meth:`SlotProblem.merit` is kept: equal power is often
    a stationary point of the sum rate.
    """
    w_init = np.asarray(w_init.w if hasattr(w_init, "w") else w_init, dtype=complex)
    root_p = math.sqrt(cfg.P)
    ws, flags, traces = [], [], []
    for t, prob in enumerate(slot_problems(E, schedule, cfg)):
        w0 = w_init[t] / root_p
        res = optimize_slot(prob, w0, cfg.sca_power_max_iter)
        if restarts:
            phase = np.where(np.abs(w0) > 0, np.exp(1j * np.angle(w0)), 1.0)
            for start in dominant_starts(prob.M):
                alt = optimize_slot(prob, start * phase, cfg.sca_power_max_iter)
                if prob.merit(alt.w) > prob.merit(res.w):
                    res = alt
        ws.append(res.w * root_p)
        flags.append(res.feasible)
        traces.append(res.trace)
    return AllocationResult(PowerAllocation(np.array(ws)), np.array(flags), traces)


def mrt_baseline(E: np.ndarray, schedule: Schedule, cfg: SystemConfig) -> PowerAllocation:
    """Equal power, each coefficient co-phased with its served user's channel."""
    w = np.empty((cfg.T, cfg.M), dtype=complex)
    amp = math.sqrt(cfg.P / cfg.M)
    for t, served_t in enumerate(schedule.served):
        own = E[np.arange(cfg.M), served_t]
        w[t] = amp * np.exp(-1j * np.angle(own))
    return PowerAllocation(w)

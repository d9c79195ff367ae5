"""Small exact and first-order solvers shared by scheduling and power control."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class UnbalancedInstanceError(ValueError):
    pass


@dataclass(frozen=True)
class TransportationPolytope:
    """Matrices with unit row sums and prescribed integer column sums."""

    n_rows: int
    capacities: tuple[int, ...]

    def __post_init__(self):
        caps = tuple(int(c) for c in self.capacities)
        if any(c < 0 for c in caps) or sum(caps) != self.n_rows:
            raise UnbalancedInstanceError(
                f"row supply {self.n_rows} != total capacity {sum(caps)}")
        object.__setattr__(self, "capacities", caps)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, len(self.capacities)

    def vertex(self, gain: np.ndarray) -> np.ndarray:
        """Vertex maximising the linear function <gain, X>."""
        return solve_transportation(-np.asarray(gain, dtype=float), self.capacities)

    def barycenter(self) -> np.ndarray:
        caps = np.asarray(self.capacities, dtype=float)
        return np.tile(caps / self.n_rows, (self.n_rows, 1))

    def residual(self, X: np.ndarray) -> float:
        X = np.asarray(X, dtype=float)
        return max(np.abs(X.sum(axis=1) - 1.0).max(),
                   np.abs(X.sum(axis=0) - np.asarray(self.capacities)).max(),
                   max(0.0, -X.min()))


@dataclass(frozen=True)
class BlockPolytope:
    """Cartesian product of transportation polytopes over disjoint row blocks."""

    n_rows: int
    n_cols: int
    blocks: tuple[tuple[np.ndarray, TransportationPolytope], ...]

    def vertex(self, gain: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for rows, poly in self.blocks:
            out[rows] = poly.vertex(gain[rows])
        return out

    def barycenter(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for rows, poly in self.blocks:
            out[rows] = poly.barycenter()
        return out

    def residual(self, X: np.ndarray) -> float:
        return max(poly.residual(X[rows]) for rows, poly in self.blocks)


def solve_transportation(cost, capacities: Sequence[int]) -> np.ndarray:
    """Exact min-cost assignment of unit-supply rows to capacitated columns.

    Returns the optimal 0/1 matrix. Columns are replicated by capacity and the
    resulting square assignment problem is solved exactly.
    """
    cost = np.asarray(cost, dtype=float)
    caps = np.asarray(capacities, dtype=int)
    n, f = cost.shape
    if caps.shape != (f,) or caps.sum() != n or np.any(caps < 0):
        raise UnbalancedInstanceError(f"supply {n} vs capacities {caps.tolist()}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite")
    owner = np.repeat(np.arange(f), caps)
    rows, cols = linear_sum_assignment(cost[:, owner])
    X = np.zeros((n, f))
    X[rows, owner[cols]] = 1.0
    return X


@dataclass
class FWResult:
    x: np.ndarray
    value: float
    gap: float
    iterations: int
    trace: list[float] = field(default_factory=list)


def _line_search(grad, x, d, lo=0.0, hi=1.0, iters=40) -> float:
    """Maximiser over [lo, hi] of a concave function along ``d``."""
    if np.vdot(grad(x + hi * d), d) >= 0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.vdot(grad(x + mid * d), d) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def frank_wolfe_maximize(fn: Callable, grad: Callable, polytope, x0: np.ndarray,
                         max_iter: int = 200, tol: float = 1e-8,
                         step: str = "linesearch") -> FWResult:
    """Conditional-gradient ascent of a concave function over a polytope.

    ``polytope.vertex(g)`` must return the vertex maximising ``<g, x>``.
    ``step="open_loop"`` uses 2/(k+2), halved until the objective does not drop.
    """
    x = np.array(x0, dtype=float)
    value = fn(x)
    trace = [value]
    gap = np.inf
    it = 0
    for it in range(max_iter):
        g = grad(x)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in Frank-Wolfe")
        d = polytope.vertex(g) - x
        gap = float(np.vdot(g, d))
        if gap <= tol:
            break
        if step == "linesearch":
            gamma = _line_search(grad, x, d)
        else:
            gamma = 2.0 / (it + 2.0)
            while gamma > 1e-12 and fn(x + gamma * d) < value:
                gamma *= 0.5
        x_new = x + gamma * d
        v_new = fn(x_new)
        if v_new < value:  # numerical noise at the optimum
            break
        x, value = x_new, v_new
        trace.append(value)
    else:
        it = max_iter
    return FWResult(x=x, value=value, gap=gap, iterations=it, trace=trace)


def project_power_ball(w, P: float) -> np.ndarray:
    w = np.asarray(w)
    n2 = float(np.vdot(w, w).real)
    if n2 <= P:
        return w.copy()
    return w * np.sqrt(P / n2)


@dataclass
class ConstrainedResult:
    x: np.ndarray
    value: float
    max_violation: float
    feasible: bool
    converged: bool
    multipliers: np.ndarray
    message: str = ""


def _pg_ascent(phi, dphi, x, P, max_iter, tol, armijo_c=1e-4, shrink=0.5):
    """Projected gradient ascent on the ball with BB steps and Armijo backtracking."""
    f = phi(x)
    g = dphi(x)
    step = 1.0
    x_prev = g_prev = None
    pg_norm = np.inf
    for _ in range(max_iter):
        pg_norm = float(np.linalg.norm(project_power_ball(x + g, P) - x))
        if pg_norm <= tol:
            break
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = -float(np.dot(s, y))
            if sy > 0:
                step = float(np.dot(s, s)) / sy
        step = min(max(step, 1e-12), 1e12)
        while True:
            x_new = project_power_ball(x + step * g, P)
            f_new = phi(x_new)
            if f_new >= f + armijo_c * float(np.dot(g, x_new - x)) or step < 1e-14:
                break
            step *= shrink
        if f_new < f:
            break
        x_prev, g_prev = x, g
        x, f = x_new, f_new
        g = dphi(x)
    return x, pg_norm


def constrained_concave_maximize(objective: Callable, gradient: Callable,
                                 constraints: Sequence[tuple[Callable, Callable]],
                                 P: float, x0, *, rho0: float = 10.0, rho_growth: float = 5.0,
                                 max_outer: int = 8, max_inner: int = 500,
                                 feas_tol: float = 1e-6, pg_tol: float = 1e-6) -> ConstrainedResult:
    """Maximise a concave function s.t. convex ``g_j(x) <= 0`` and ``||x||^2 <= P``.

    Augmented-Lagrangian outer loop, projected-gradient inner loop. Returns the
    best iterate meeting ``feas_tol``; ``feasible=False`` if none did.
    """
    x = project_power_ball(np.asarray(x0, dtype=float), P)
    J = len(constraints)
    lam = np.zeros(J)
    rho = rho0

    def g_all(z):
        return np.array([c(z) for c, _ in constraints]) if J else np.zeros(0)

    best = None
    converged = False
    for _ in range(max_outer):
        lam_k, rho_k = lam.copy(), rho

        def phi(z):
            shifted = np.maximum(0.0, lam_k + rho_k * g_all(z))
            return objective(z) - (np.sum(shifted ** 2) - np.sum(lam_k ** 2)) / (2 * rho_k)

        def dphi(z):
            out = np.array(gradient(z), dtype=float)
            if J:
                shifted = np.maximum(0.0, lam_k + rho_k * g_all(z))
                for mult, (_, dg) in zip(shifted, constraints):
                    if mult > 0:
                        out = out - mult * dg(z)
            return out

        x, pg_norm = _pg_ascent(phi, dphi, x, P, max_inner, pg_tol)
        gx = g_all(x)
        viol = float(max(0.0, gx.max())) if J else 0.0
        value = float(objective(x))
        if viol <= feas_tol and (best is None or value > best.value):
            best = ConstrainedResult(x.copy(), value, viol, True, False, lam.copy())
        lam = np.maximum(0.0, lam + rho * gx) if J else lam
        if viol <= feas_tol and pg_norm <= pg_tol:
            # KKT residual: also require complementary slackness.
            if not J or np.all(lam * np.minimum(0.0, gx) > -feas_tol):
                converged = True
                best.converged = True
                best.multipliers = lam.copy()
                break
        rho *= rho_growth
    if best is None:
        gx = g_all(x)
        return ConstrainedResult(x, float(objective(x)), float(max(0.0, gx.max())), False,
                                 False, lam, "no iterate satisfied the constraints")
    best.message = "converged" if converged else "best feasible iterate"
    return best


@dataclass
class QCQPResult:
    x: np.ndarray
    value: float
    max_violation: float
    feasible: bool
    multipliers: np.ndarray
    iterations: int


def maximize_concave_qcqp(c: np.ndarray, Q: np.ndarray, constraints: Sequence[tuple[np.ndarray, np.ndarray, float]],
                          radius2: float, *, tol: float = 1e-10, max_iter: int = 60,
                          blowup: float = 1e9) -> QCQPResult:
    """Maximise ``c.x - x.Q.x`` s.t. ``x.A_j.x + d_j.x + e_j <= 0`` and ``|x|^2 <= radius2``.

    ``Q`` and every ``A_j`` must be symmetric PSD. Solved through the dual:
    for fixed multipliers the Lagrangian maximiser is a linear solve, and the
    (convex, low-dimensional) dual is minimised by projected Newton. A dual
    that runs off to infinity certifies primal infeasibility.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    J = len(constraints)
    A = np.array([con[0] for con in constraints]).reshape(J, n, n)
    d = np.array([con[1] for con in constraints]).reshape(J, n)
    e = np.array([con[2] for con in constraints], dtype=float).reshape(J)
    eye = np.eye(n)
    ridge = 1e-14 * (1.0 + np.trace(Q))

    def primal(z):
        lam, mu = z[:J], z[J]
        H = Q + np.tensordot(lam, A, axes=1) + (mu + ridge) * eye
        rhs = 0.5 * (c - lam @ d)
        x = np.linalg.solve(H, rhs)
        return x, H

    def cons(x):
        return np.einsum("i,jik,k->j", x, A, x) + d @ x + e

    def dual(z):
        if not np.all(np.isfinite(z)):
            return np.inf, None, None, None
        try:
            x, H = primal(z)
        except np.linalg.LinAlgError:
            return np.inf, None, None, None
        q = cons(x)
        val = c @ x - x @ Q @ x - z[:J] @ q - z[J] * (x @ x - radius2)
        grad = np.concatenate([-q, [radius2 - x @ x]])
        return val, grad, x, H

    z = np.zeros(J + 1)
    val, grad, x, H = dual(z)
    it = 0
    for it in range(max_iter):
        proj = z - np.maximum(0.0, z - grad)
        if np.max(np.abs(proj)) <= tol:
            break
        R = np.column_stack([(2.0 * (A @ x) + d).T, 2.0 * x]) if J else 2.0 * x[:, None]
        B = 0.5 * R.T @ np.linalg.solve(H, R)
        active = (z <= 1e-12) & (grad > 0)
        free = ~active
        step = -grad.copy()
        if free.any():
            Bf = B[np.ix_(free, free)]
            Bf = Bf + 1e-12 * (1.0 + np.trace(Bf)) * np.eye(Bf.shape[0])
            step[free] = -np.linalg.solve(Bf, grad[free])
        t = 1.0
        while True:
            z_new = np.maximum(0.0, z + t * step)
            v_new, g_new, x_new, H_new = dual(z_new)
            if t < 1e-12 or (np.isfinite(v_new) and v_new <= val + 1e-4 * grad @ (z_new - z)):
                break
            t *= 0.5
        if not np.isfinite(v_new):
            z = np.full_like(z, np.inf)  # dual unbounded below along the step
            break
        if np.allclose(z_new, z, rtol=0, atol=1e-15):
            break
        z, val, grad, x, H = z_new, v_new, g_new, x_new, H_new
        if np.max(z) > blowup:
            break
    viol = float(max(0.0, cons(x).max())) if J else 0.0
    viol = max(viol, float(x @ x - radius2))
    feasible = bool(np.max(z) <= blowup) and viol <= 1e-6
    return QCQPResult(x=x, value=float(c @ x - x @ Q @ x), max_violation=viol,
                      feasible=bool(feasible), multipliers=z, iterations=it)

"""Convex QP solver for the optimal-shrinkage program.

Solves  minimize x^T Q x  subject to  a^T x = b, x >= 0  with Q PSD and
a > 0.  Strategy: try the equality-constrained solution first (the bound is
expected to be slack); otherwise run FISTA with exact projection onto the
weighted simplex slice, then polish with a primal active-set loop so the
reported KKT residual reaches the requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

__all__ = ["QpResult", "project_weighted_simplex", "kkt_residual", "solve_qp"]


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    bound_active: bool


def project_weighted_simplex(v: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, a.x = b} for a > 0, b > 0.

    The projection is max(v - theta a, 0) with theta solving a.x(theta) = b;
    phi(theta) is piecewise linear and decreasing, so bisection is exact to
    machine precision.
    """
    lo = (a @ v - b) / (a @ a)  # phi(lo) >= b
    hi = np.max(v / a)  # phi(hi) = 0 < b
    if hi <= lo:
        hi = lo + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a @ np.maximum(v - mid * a, 0.0) >= b:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi) * a, 0.0)


def kkt_residual(Q: np.ndarray, a: np.ndarray, x: np.ndarray, b: float) -> float:
    """Scaled KKT residual of the bound-and-equality constrained QP.

    The equality multiplier is fit by least squares on the free set; the
    residual combines stationarity on free coordinates, dual feasibility on
    active ones, and primal feasibility, scaled by max(1, ||grad||_inf).
    """
    grad = 2.0 * (Q @ x)
    free = x > 1e-12 * max(1.0, float(np.max(x)))
    denom = float(a[free] @ a[free])
    nu = float(a[free] @ grad[free]) / denom if denom > 0 else 0.0
    resid = grad - nu * a
    r_stat = float(np.max(np.abs(resid[free]))) if np.any(free) else 0.0
    r_dual = float(np.max(np.maximum(-resid[~free], 0.0))) if np.any(~free) else 0.0
    r_feas = abs(float(a @ x) - b) + float(np.maximum(-x, 0.0).max(initial=0.0))
    scale = max(1.0, float(np.max(np.abs(grad))))
    return max(r_stat, r_dual, r_feas) / scale


def _equality_solution(Q, a, b, free=None):
    """Solve the QP restricted to a free set with the bound ignored."""
    n = Q.shape[0]
    if free is None:
        free = np.ones(n, dtype=bool)
    idx = np.flatnonzero(free)
    k = idx.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * Q[np.ix_(idx, idx)]
    kkt[:k, k] = -a[idx]
    kkt[k, :k] = a[idx]
    rhs = np.zeros(k + 1)
    rhs[k] = b
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        reg = 1e-12 * (1.0 + np.abs(np.diag(kkt)).max())
        sol = np.linalg.solve(kkt + reg * np.eye(k + 1), rhs)
    x = np.zeros(n)
    x[idx] = sol[:k]
    return x, float(sol[k])


def _fista(Q, a, b, x0, lipschitz, max_iter, tol):
    x = project_weighted_simplex(x0, a, b)
    y, t = x.copy(), 1.0
    step = 1.0 / lipschitz
    best, best_r = x, kkt_residual(Q, a, x, b)
    f_prev = float(x @ Q @ x)
    for it in range(max_iter):
        grad = 2.0 * (Q @ y)
        x_new = project_weighted_simplex(y - step * grad, a, b)
        f_new = float(x_new @ Q @ x_new)
        if f_new > f_prev:  # restart momentum
            t, y = 1.0, x.copy()
            f_prev = float(x @ Q @ x)
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, f_prev = x_new, t_new, f_new
        if it % 25 == 0:
            r = kkt_residual(Q, a, x, b)
            if r < best_r:
                best, best_r = x.copy(), r
            if r < tol:
                return x, it
    return best, max_iter


def _active_set_polish(Q, a, b, x0, tol, max_changes):
    """Primal active-set refinement from a near-solution."""
    n = Q.shape[0]
    scale = max(1.0, float(np.max(np.abs(2.0 * Q @ x0))))
    active = x0 <= 1e-10 * max(1.0, float(np.max(x0)))
    for _ in range(max_changes):
        x, nu = _equality_solution(Q, a, b, free=~active)
        neg = (x < -1e-12) & ~active
        if np.any(neg):
            # bind the most negative coordinate and retry
            j = int(np.argmin(np.where(neg, x, np.inf)))
            active[j] = True
            continue
        x = np.maximum(x, 0.0)
        grad = 2.0 * (Q @ x)
        duals = grad - nu * a
        viol = np.where(active, -duals, -np.inf)
        j = int(np.argmax(viol))
        if viol[j] > tol * scale:
            active[j] = False  # release the worst bound
            continue
        return x
    return None


def solve_qp(Q: np.ndarray, a: np.ndarray, b: float = 1.0, x0=None,
             tol: float = 1e-6, max_iter: int = 20000) -> QpResult:
    """Solve min x'Qx s.t. a'x = b, x >= 0 (Q PSD, a > 0, b > 0)."""
    n = Q.shape[0]
    if np.any(a <= 0):
        raise NumericalError("constraint weights must be positive")

    # the nonnegativity bound is expected to be slack: try without it
    x_eq, _ = _equality_solution(Q, a, b)
    if np.min(x_eq) >= 0.0:
        r = kkt_residual(Q, a, x_eq, b)
        if r < tol:
            return QpResult(x_eq, float(x_eq @ Q @ x_eq), r, 0, False)

    evals = np.linalg.eigvalsh(Q)
    lipschitz = max(2.0 * float(evals[-1]), 1e-30)
    if x0 is None:
        x0 = np.full(n, b / float(a @ np.ones(n)))
    x, iters = _fista(Q, a, b, np.asarray(x0, dtype=float), lipschitz,
                      max_iter, tol)
    r = kkt_residual(Q, a, x, b)
    if r >= tol:
        polished = _active_set_polish(Q, a, b, x, 1e-9, 6 * n)
        if polished is not None:
            rp = kkt_residual(Q, a, polished, b)
            if rp < r:
                x, r = polished, rp
    if r >= tol:
        raise NumericalError(f"QP solver stalled at KKT residual {r:.2e}")
    bound_active = bool(np.any(x <= 1e-12 * max(1.0, float(np.max(x)))))
    return QpResult(x, float(x @ Q @ x), r, iters, bound_active)

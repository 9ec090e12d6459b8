"""Long-only, box-capped mean-variance allocation by projected gradient ascent."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBox, NonFiniteInput

log = logging.getLogger(__name__)

TOL_STEP = 1e-10
MAX_ITER = 100_000
KKT_TOL = 1e-6


@dataclass(frozen=True)
class AllocationProblem:
    mu_ex: np.ndarray  # expected daily excess returns
    sigma: np.ndarray
    risk_aversion: float = 1.0
    w_max: float = 0.15
    kappa: float = np.inf
    prev_weights: np.ndarray | None = None


@dataclass(frozen=True)
class AllocationResult:
    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    turnover_applied: bool = False


def _check_box(n: int, w_max: float) -> None:
    if not 0 < w_max <= 1 or n * w_max < 1 - 1e-12:
        raise InfeasibleBox(f"{n} assets with cap {w_max} cannot sum to one")


def project_capped_simplex(v: np.ndarray, w_max: float) -> np.ndarray:
    """Euclidean projection onto ``{w : sum w = 1, 0 <= w <= w_max}``.

    The solution is ``clip(v - mu, 0, w_max)`` for the shift ``mu`` that makes
    the weights sum to one. ``sum(clip(v - mu))`` is piecewise linear and
    non-increasing in ``mu`` with kinks at ``v_i`` and ``v_i - w_max``; the
    bracketing kinks are found by bisection over the sorted kinks and the
    shift is then solved exactly on that linear piece.
    """
    v = np.asarray(v, dtype=float)
    n = len(v)
    _check_box(n, w_max)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("projection input is not finite")

    def total(mu: float) -> float:
        return float(np.clip(v - mu, 0.0, w_max).sum())

    # total(kinks[0]) = n * w_max >= 1 and total(kinks[-1]) = 0
    kinks = np.unique(np.concatenate([v, v - w_max]))
    lo, hi = 0, len(kinks) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if total(kinks[mid]) >= 1.0:
            lo = mid
        else:
            hi = mid
    a, b = kinks[lo], kinks[hi]
    fa, fb = total(a), total(b)
    mu = a if fa == fb else a + (fa - 1.0) * (b - a) / (fa - fb)
    w = np.clip(v - mu, 0.0, w_max)
    # polish: spread any rounding residue over the free coordinates
    free = (w > 0) & (w < w_max)
    if free.any():
        w[free] += (1.0 - w.sum()) / free.sum()
        w = np.clip(w, 0.0, w_max)
    return w


def objective(w: np.ndarray, mu_ex: np.ndarray, sigma: np.ndarray, risk_aversion: float) -> float:
    return float(w @ mu_ex - 0.5 * risk_aversion * w @ sigma @ w)


def kkt_residual(w: np.ndarray, mu_ex: np.ndarray, sigma: np.ndarray, risk_aversion: float, w_max: float, tol: float = 1e-12) -> float:
    """Smallest achievable max violation of the KKT conditions over the budget multiplier.

    With gradient ``g``, a free coordinate needs ``g_i = nu``, one at zero
    needs ``g_i <= nu`` and one at the cap needs ``g_i >= nu``.
    """
    g = mu_ex - risk_aversion * sigma @ w
    at_zero = w <= tol
    at_cap = w >= w_max - tol
    free = ~(at_zero | at_cap)
    wants_above = g[free | at_zero]  # nu must be >= these
    wants_below = g[free | at_cap]  # nu must be <= these
    if len(wants_above) == 0 or len(wants_below) == 0:
        return 0.0
    return max(0.0, 0.5 * (wants_above.max() - wants_below.min()))


def solve_mvo(problem: AllocationProblem, tol: float = TOL_STEP, max_iter: int = MAX_ITER) -> AllocationResult:
    """Maximize ``w'mu - (lambda/2) w'Sigma w`` over the capped simplex.

    Fixed step ``1/L`` with ``L = lambda * lambda_max(Sigma)``, started from the
    projected equal-weight point. The objective is concave, so the KKT point
    reached is a global optimum.
    """
    mu = np.asarray(problem.mu_ex, dtype=float)
    sigma = np.asarray(problem.sigma, dtype=float)
    lam = float(problem.risk_aversion)
    n = len(mu)
    _check_box(n, problem.w_max)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma)) and np.isfinite(lam)):
        raise NonFiniteInput("non-finite expected returns, covariance or risk aversion")
    if lam <= 0:
        raise ValueError("risk aversion must be positive")
    top = float(np.linalg.eigvalsh(0.5 * (sigma + sigma.T))[-1])
    L = lam * top
    if not L > 0.0:
        # zero covariance leaves a linear objective; any positive step reaches its vertex
        L = max(float(np.abs(mu).max()), 1.0)
    step = 1.0 / L
    w = project_capped_simplex(np.full(n, 1.0 / n), problem.w_max)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = mu - lam * (sigma @ w)
        w_new = project_capped_simplex(w + step * grad, problem.w_max)
        moved = float(np.max(np.abs(w_new - w)))
        w = w_new
        if moved < tol:
            converged = True
            break
    if not converged:
        log.warning("solve_mvo hit %d iterations without converging", max_iter)
    return AllocationResult(
        weights=w,
        objective=objective(w, mu, sigma, lam),
        kkt_residual=kkt_residual(w, mu, sigma, lam, problem.w_max),
        iterations=it,
        converged=converged,
    )


def apply_turnover_limit(w_star: np.ndarray, prev: np.ndarray, kappa: float) -> np.ndarray:
    """Move from ``prev`` towards ``w_star`` only as far as an L1 budget ``kappa`` allows."""
    w_star = np.asarray(w_star, dtype=float)
    prev = np.asarray(prev, dtype=float)
    dist = float(np.abs(w_star - prev).sum())
    if dist <= kappa:
        return w_star.copy()
    theta = kappa / dist
    return prev + theta * (w_star - prev)


def allocate(problem: AllocationProblem) -> AllocationResult:
    """Solve, then apply the turnover limit when ``kappa`` is finite and a prior exists."""
    res = solve_mvo(problem)
    if problem.prev_weights is None or not np.isfinite(problem.kappa):
        return res
    w = apply_turnover_limit(res.weights, problem.prev_weights, problem.kappa)
    applied = not np.array_equal(w, res.weights)
    return AllocationResult(
        weights=w,
        objective=objective(w, problem.mu_ex, problem.sigma, problem.risk_aversion),
        kkt_residual=res.kkt_residual,
        iterations=res.iterations,
        converged=res.converged,
        turnover_applied=applied,
    )

"""Constrained (weighted) l1 minimization and support/value estimation.

The solver handles

    min_x  lam * ||x_T||_1 + ||x_{T^c}||_1   s.t.  ||y - Phi x||_2 <= radius

for a matrix-free linear operator Phi, via a primal-dual operator-splitting
iteration whose only ingredients are the operator (and its adjoint), a
weighted soft-threshold, and projection onto the l2 ball.  ``lam = 1``
reduces to plain l1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


def empty_support() -> Array:
    return np.empty(0, dtype=np.int64)


class IllConditionedSupport(ValueError):
    """Raised when the operator restricted to a support is numerically
    rank-deficient."""


@dataclass
class LinearMap:
    """Matrix-free operator: ``apply`` maps R^n -> R^m, ``adjoint`` back.

    ``opnorm_hint``, when known, skips the power-iteration step-size
    estimate (e.g. 1.0 for an orthogonal projector).
    """

    apply: Callable[[Array], Array]
    adjoint: Callable[[Array], Array]
    shape: tuple[int, int]
    opnorm_hint: float | None = None


def matrix_map(mat: Array) -> LinearMap:
    mat = np.asarray(mat, dtype=float)
    return LinearMap(
        apply=lambda v: mat @ v,
        adjoint=lambda w: mat.T @ w,
        shape=mat.shape,
        opnorm_hint=float(np.linalg.norm(mat, 2)) if min(mat.shape) else 0.0,
    )


@dataclass
class SolverConfig:
    max_iters: int = 2000
    rel_tol: float = 1e-6
    feas_slack: float = 1e-4

    def __post_init__(self):
        if self.max_iters <= 0 or self.rel_tol <= 0 or self.feas_slack <= 0:
            raise ValueError("solver configuration values must be positive")


@dataclass
class L1Problem:
    op: LinearMap
    y: Array
    radius: float
    weight_set: Array = field(default_factory=empty_support)
    lam: float = 1.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("residual budget must be nonnegative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("weight lambda must be in [0, 1]")


@dataclass
class L1Result:
    x: Array
    converged: bool
    iterations: int
    residual: float
    objective: float


def coordinate_weights(n: int, weight_set: Array, lam: float) -> Array:
    w = np.ones(n)
    if weight_set.size:
        w[weight_set] = lam
    return w


def weighted_objective(x: Array, weight_set: Array, lam: float) -> float:
    return float(coordinate_weights(x.size, weight_set, lam) @ np.abs(x))


def soft_threshold(z: Array, level: Array) -> Array:
    return np.sign(z) * np.maximum(np.abs(z) - level, 0.0)


def _estimate_opnorm(op: LinearMap, iters: int = 30) -> float:
    m, n = op.shape
    v = np.ones(n) / np.sqrt(n)
    est = 0.0
    for start in range(min(n, 4)):
        if start > 0:
            v = np.zeros(n)
            v[start - 1] = 1.0
        for _ in range(iters):
            w = op.adjoint(op.apply(v))
            nrm = float(np.linalg.norm(w))
            if nrm < 1e-30:
                break
            v = w / nrm
            est = max(est, np.sqrt(nrm))
        if est > 0:
            break
    return est if est > 0 else 1.0


def solve_weighted_l1(
    prob: L1Problem,
    cfg: SolverConfig | None = None,
    x0: Array | None = None,
) -> L1Result:
    """Solve the weighted l1 problem; deterministic for fixed inputs.

    The problem is rescaled so ||y|| = 1, making the tolerances relative.
    On non-convergence (or an infeasible radius) the best iterate found is
    returned with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    m, n = prob.op.shape
    y = np.asarray(prob.y, dtype=float)
    scale = float(np.linalg.norm(y))
    weights = coordinate_weights(n, prob.weight_set, prob.lam)

    # Zero is feasible (and optimal, the objective is nonnegative).
    if scale == 0.0 or prob.radius >= scale:
        x = np.zeros(n)
        return L1Result(x, True, 0, scale, 0.0)

    y_n = y / scale
    radius_n = prob.radius / scale
    feas_tol = radius_n * (1.0 + cfg.feas_slack) + 1e-8

    lip = prob.op.opnorm_hint
    if lip is None:
        lip = _estimate_opnorm(prob.op)
    lip = max(lip * 1.01, 1e-12)
    tau = sigma = 0.99 / lip

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / scale
    xbar = x.copy()
    p = np.zeros(m)
    shrink = tau * weights

    best_x = x
    best_obj = np.inf
    best_resid = float(np.linalg.norm(y_n - prob.op.apply(x)))
    converged = False
    it = 0
    check_every = 10

    for it in range(1, cfg.max_iters + 1):
        q = p + sigma * prob.op.apply(xbar)
        # prox of the conjugate of the ball indicator, via Moreau
        v = q / sigma
        dv = v - y_n
        nd = float(np.linalg.norm(dv))
        ball = y_n + (dv * (radius_n / nd) if nd > radius_n else dv)
        p_new = q - sigma * ball
        x_new = soft_threshold(x - tau * prob.op.adjoint(p_new), shrink)
        xbar = 2.0 * x_new - x

        dx = float(np.linalg.norm(x_new - x)) / max(1.0, float(np.linalg.norm(x_new)))
        dp = float(np.linalg.norm(p_new - p)) / max(1.0, float(np.linalg.norm(p_new)))
        x, p = x_new, p_new

        if it % check_every == 0 or it == cfg.max_iters:
            resid = float(np.linalg.norm(y_n - prob.op.apply(x)))
            obj = float(weights @ np.abs(x))
            if resid <= feas_tol and obj < best_obj:
                best_x, best_obj, best_resid = x.copy(), obj, resid
            if resid <= feas_tol and dx < cfg.rel_tol and dp < cfg.rel_tol:
                converged = True
                best_x, best_resid = x, resid
                break

    x_out = best_x if (converged or np.isfinite(best_obj)) else x
    resid_out = best_resid if (converged or np.isfinite(best_obj)) else float(
        np.linalg.norm(y_n - prob.op.apply(x))
    )
    x_full = x_out * scale
    return L1Result(
        x=x_full,
        converged=converged,
        iterations=it,
        residual=resid_out * scale,
        objective=weighted_objective(x_full, prob.weight_set, prob.lam),
    )


def thresh(x: Array, level: float) -> Array:
    """Indices of entries with magnitude >= level, sorted."""
    if level < 0:
        raise ValueError("threshold must be nonnegative")
    return np.flatnonzero(np.abs(np.asarray(x)) >= level).astype(np.int64)


def prune(x: Array, k: int) -> Array:
    """Indices of the k largest-magnitude entries; ties go to the lower index."""
    x = np.asarray(x)
    k = max(0, min(int(k), x.size))
    if k == 0:
        return empty_support()
    order = np.argsort(-np.abs(x), kind="stable")
    return np.sort(order[:k]).astype(np.int64)


def support_columns(op: LinearMap, support: Array) -> Array:
    """Columns of the operator at the support indices, as a dense m x |T| block."""
    m, n = op.shape
    cols = np.zeros((m, support.size))
    unit = np.zeros(n)
    for out_idx, j in enumerate(support):
        unit[j] = 1.0
        cols[:, out_idx] = op.apply(unit)
        unit[j] = 0.0
    return cols


def least_squares_on_support(op: LinearMap, y: Array, support: Array) -> Array:
    """Least-squares fit of y on the operator's support columns, zero elsewhere.

    Raises IllConditionedSupport when the restricted columns are numerically
    dependent (smallest singular value <= 1e-8 * largest).
    """
    support = np.asarray(support, dtype=np.int64)
    n = op.shape[1]
    out = np.zeros(n)
    if support.size == 0:
        return out
    cols = support_columns(op, support)
    u, s, vt = np.linalg.svd(cols, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= 1e-8 * s[0]:
        raise IllConditionedSupport("ill-conditioned support")
    out[support] = vt.T @ ((u.T @ y) / s)
    return out


def support_overlap_policy(
    support_prev2: Array, support_prev1: Array
) -> tuple[bool, float]:
    """Decide between plain and weighted l1 from the last two supports.

    Weighted recovery is used when at least half of the older support
    carried over; the weight is the estimated fraction of extras in the
    newer support.  Degenerate (empty) histories fall back to plain l1.
    """
    n2, n1 = support_prev2.size, support_prev1.size
    if n2 == 0 or n1 == 0:
        return False, 1.0
    overlap = np.intersect1d(support_prev2, support_prev1, assume_unique=True).size
    if overlap / n2 < 0.5:
        return False, 1.0
    departed = np.setdiff1d(support_prev2, support_prev1, assume_unique=True).size
    return True, float(departed / n1)

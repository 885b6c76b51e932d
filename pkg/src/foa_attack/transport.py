"""Entropic optimal transport between two sets of cluster centers.

Cost is cosine distance on L2-normalized rows. The Sinkhorn solver runs in the
plain (non-log) domain with uniform 1/n marginals and raises on kernel underflow
instead of silently stabilizing. `exact_ot_bruteforce` is the independent oracle:
for uniform marginals the optimal coupling is a permutation matrix scaled by 1/n,
so small instances can be solved by enumeration.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    NumericalUnderflowError,
    ShapeMismatchError,
    TooLargeError,
    ZeroNormRowError,
)
from .mathutil import NORM_EPS

UNDERFLOW_FLOOR = 1e-300
DEFAULT_MAX_ITER = 1000
DEFAULT_TOL = 1e-9
BRUTEFORCE_MAX_N = 8


@dataclass(frozen=True)
class TransportPlan:
    plan: np.ndarray  # (n, n), rows and columns sum to 1/n
    u: np.ndarray
    v: np.ndarray
    cost: float  # sum_ab C_ab * plan_ab
    iterations: int
    marginal_residual: float


def _normalize_rows(x, label):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"{label} must be 2-d, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    if (norms < NORM_EPS).any():
        raise ZeroNormRowError(f"{label} has a row with norm < {NORM_EPS}")
    return x / norms[:, None], norms


def cost_matrix(x_centers, y_centers):
    """C_ab = 1 - <x_a, y_b> on L2-normalized rows; entries lie in [0, 2]."""
    xn, _ = _normalize_rows(x_centers, "x_centers")
    yn, _ = _normalize_rows(y_centers, "y_centers")
    if xn.shape != yn.shape:
        raise ShapeMismatchError(f"center shapes differ: {xn.shape} vs {yn.shape}")
    return 1.0 - xn @ yn.T


def sinkhorn(cost, lam=0.1, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL):
    """Alternating-scaling solver for uniform 1/n marginals.

    u is updated first, v starts at all-ones; stops when both marginals are within
    `tol` of 1/n or after `max_iter` sweeps.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeMismatchError(f"cost must be square, got shape {cost.shape}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    n = cost.shape[0]
    kernel = np.exp(-cost / lam)
    if kernel.sum(axis=1).min() < UNDERFLOW_FLOOR or kernel.sum(axis=0).min() < UNDERFLOW_FLOOR:
        raise NumericalUnderflowError(
            f"exp(-C/{lam}) underflowed; lambda too small for this cost matrix")

    target = 1.0 / n
    v = np.ones(n)
    u = np.ones(n)
    kv = kernel @ v
    iterations = 0
    residual = np.inf
    for _ in range(max_iter):
        iterations += 1
        u = 1.0 / (n * kv)
        ktu = kernel.T @ u
        v = 1.0 / (n * ktu)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NumericalUnderflowError("Sinkhorn scaling vectors left the finite range")
        kv = kernel @ v
        # column sums are exact by construction of v; the row residual drives convergence
        residual = max(np.abs(u * kv - target).max(), np.abs(v * ktu - target).max())
        if residual < tol:
            break
    plan = u[:, None] * kernel * v[None, :]
    return TransportPlan(plan=plan, u=u, v=v, cost=float((cost * plan).sum()),
                         iterations=iterations, marginal_residual=float(residual))


def exact_ot_bruteforce(cost):
    """Exact optimum over the 1/n-scaled Birkhoff polytope by permutation enumeration."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeMismatchError(f"cost must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n > BRUTEFORCE_MAX_N:
        raise TooLargeError(f"brute force limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    rows = np.arange(n)
    best_cost = np.inf
    best_perm = None
    for perm in itertools.permutations(range(n)):
        c = cost[rows, perm].sum() / n
        if c < best_cost:
            best_cost = c
            best_perm = perm
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    return plan, float(best_cost)


def sinkhorn_loss_grad(x_centers, y_centers, lam=0.1,
                       max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL):
    """Transport cost between center sets and its envelope gradient w.r.t. x_centers.

    The plan is treated as a constant of the optimization (exact at the entropic
    optimum for cost perturbations); only the normalized-cosine cost is
    differentiated. The returned gradient row is orthogonal to the matching
    x_centers row because of the normalization.
    """
    xn, xnorms = _normalize_rows(x_centers, "x_centers")
    yn, _ = _normalize_rows(y_centers, "y_centers")
    if xn.shape != yn.shape:
        raise ShapeMismatchError(f"center shapes differ: {xn.shape} vs {yn.shape}")
    cost = 1.0 - xn @ yn.T
    result = sinkhorn(cost, lam=lam, max_iter=max_iter, tol=tol)
    weighted = result.plan @ yn  # row a: sum_b pi_ab * y_hat_b
    along = (xn * weighted).sum(axis=1)
    d_x = -(weighted - along[:, None] * xn) / xnorms[:, None]
    return result.cost, d_x

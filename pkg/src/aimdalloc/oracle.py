"""Utilitarian optimum of the allocation problem, solved by projected gradient.

minimize  sum_i f_i(y_i)   subject to  sum_i y_i^j = C^j,  y_i^j >= 0.

Strict convexity makes the optimum unique, so cheap projected gradient with a
backtracking line search suffices; every iterate stays feasible because the
step is followed by an exact Euclidean projection onto each resource's scaled
simplex.  A brute-force grid search over the feasible polytope serves as an
independent check on tiny instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import SystemConfig, validate_config

__all__ = [
    "OptimalAllocation",
    "OracleError",
    "project_capacity_simplex",
    "social_cost",
    "solve_optimal",
    "kkt_residual",
    "brute_force_small",
]

ACTIVE_FRACTION = 1e-7  # share of capacity below which an agent counts as inactive


class OracleError(RuntimeError):
    """Solver failure; carries the last iterate for inspection."""

    def __init__(self, message: str, iterate=None):
        super().__init__(message)
        self.iterate = iterate


def project_capacity_simplex(v, capacity: float) -> np.ndarray:
    """Euclidean projection onto {y >= 0, sum(y) = capacity} by sort and threshold."""
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    excess = np.cumsum(u) - capacity
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - excess / ks > 0)[0][-1]
    theta = excess[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def social_cost(costs, Y: np.ndarray) -> float:
    """Total cost of an allocation matrix (agents by resources)."""
    return float(sum(cost.value(Y[i]) for i, cost in enumerate(costs)))


def _project_columns(Y: np.ndarray, capacity: np.ndarray) -> np.ndarray:
    out = np.empty_like(Y)
    for j in range(Y.shape[1]):
        out[:, j] = project_capacity_simplex(Y[:, j], capacity[j])
    return out


@dataclass
class OptimalAllocation:
    """Feasible optimum with its objective value and per-resource KKT residuals."""

    allocation: np.ndarray
    objective: float
    kkt: np.ndarray
    iterations: int
    method: str

    def to_dict(self) -> dict:
        return {
            "schema": "aimdalloc.oracle.v1",
            "allocation": self.allocation.tolist(),
            "objective": self.objective,
            "kkt_residual": self.kkt.tolist(),
            "iterations": self.iterations,
            "method": self.method,
        }


def solve_optimal(cfg: SystemConfig, costs, *, tol: float = 1e-10,
                  max_iter: int = 20000, initial=None) -> OptimalAllocation:
    """Projected gradient descent with backtracking; stops when the gradient
    mapping at unit step falls below ``tol``.

    Feasibility is exact at every iterate.  Non-convergence raises
    :class:`OracleError` carrying the last iterate.
    """
    cfg = validate_config(cfg)
    costs = list(costs)
    if len(costs) != cfg.n:
        raise ValueError(f"expected {cfg.n} cost functions, got {len(costs)}")
    if initial is None:
        Y = np.tile(cfg.capacity / cfg.n, (cfg.n, 1))
    else:
        Y = _project_columns(np.asarray(initial, dtype=float), cfg.capacity)
    f = social_cost(costs, Y)
    step = 1.0
    for it in range(1, max_iter + 1):
        G = np.stack([np.asarray(costs[i].gradient(Y[i]), dtype=float) for i in range(cfg.n)])
        # stationarity measure: distance moved by a unit projected step
        probe = _project_columns(Y - G, cfg.capacity)
        gap = float(np.abs(probe - Y).max())
        if gap <= tol:
            return OptimalAllocation(
                allocation=Y,
                objective=f,
                kkt=kkt_residual(Y, costs, cfg),
                iterations=it,
                method="projected-gradient",
            )
        while True:
            cand = _project_columns(Y - step * G, cfg.capacity)
            move = cand - Y
            f_cand = social_cost(costs, cand)
            # sufficient decrease against the quadratic upper model at 1/step
            if f_cand <= f + float(np.sum(G * move)) + float(np.sum(move * move)) / (2.0 * step) + 1e-15:
                break
            step *= 0.5
            if step < 1e-18:
                raise OracleError("line search collapsed", iterate=Y)
        Y = cand
        f = f_cand
        step = min(step * 1.5, 1e6)
    raise OracleError(f"no convergence within {max_iter} iterations (gap {gap:.3e})", iterate=Y)


def kkt_residual(Y: np.ndarray, costs, cfg: SystemConfig) -> np.ndarray:
    """Per-resource stationarity residual of a feasible allocation.

    Active agents (share above a capacity fraction) must agree on the
    marginal cost; inactive agents must not undercut it.  Infeasible input is
    an error.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (cfg.n, cfg.m):
        raise ValueError(f"allocation must have shape ({cfg.n}, {cfg.m})")
    if np.any(Y < -1e-12):
        raise ValueError("allocation has negative entries")
    sums = Y.sum(axis=0)
    if np.any(np.abs(sums - cfg.capacity) > 1e-9 * cfg.capacity):
        raise ValueError(f"column sums {sums} do not meet the capacities {cfg.capacity}")
    G = np.stack([np.asarray(costs[i].gradient(Y[i]), dtype=float) for i in range(cfg.n)])
    out = np.empty(cfg.m)
    for j in range(cfg.m):
        active = Y[:, j] > ACTIVE_FRACTION * cfg.capacity[j]
        g = G[:, j]
        level = float(np.median(g[active]))
        spread = float(np.abs(g[active] - level).max())
        undercut = 0.0
        if np.any(~active):
            undercut = float(np.maximum(level - g[~active], 0.0).max())
        out[j] = max(spread, undercut)
    return out


def _compositions(total_units: int, parts: int):
    """All nonnegative integer tuples of length ``parts`` summing to ``total_units``."""
    if parts == 1:
        yield (total_units,)
        return
    for head in range(total_units + 1):
        for rest in _compositions(total_units - head, parts - 1):
            yield (head,) + rest


def brute_force_small(cfg: SystemConfig, costs, resolution: int = 101) -> OptimalAllocation:
    """Exhaustive grid minimization over the feasible polytope for tiny instances.

    Grid step is C^j/(resolution-1) per resource.  Refuses instances beyond
    n*m <= 6 or a total grid above 2e6 points; meant purely as an independent
    check on :func:`solve_optimal`.
    """
    cfg = validate_config(cfg)
    costs = list(costs)
    if cfg.n * cfg.m > 6:
        raise ValueError("brute force is limited to n*m <= 6")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    units = resolution - 1
    per_resource = []
    total = 1
    for j in range(cfg.m):
        options = [np.array(c, dtype=float) * (cfg.capacity[j] / units) for c in _compositions(units, cfg.n)]
        per_resource.append(options)
        total *= len(options)
        if total > 2_000_000:
            raise ValueError("grid too large; lower the resolution")
    best = None
    best_val = np.inf
    Y = np.empty((cfg.n, cfg.m))
    for combo in itertools.product(*per_resource):
        for j in range(cfg.m):
            Y[:, j] = combo[j]
        val = social_cost(costs, Y)
        if val < best_val:
            best_val = val
            best = Y.copy()
    return OptimalAllocation(
        allocation=best,
        objective=float(best_val),
        kkt=kkt_residual(best, costs, cfg),
        iterations=total,
        method=f"grid-{resolution}",
    )
